"""Correlator sets, tripartite distributions and the map between them.

Outcomes of Alice and Charlie are stored at index 0 for ``+1`` and index 1
for ``-1``. Bob's outcome ``b`` (1..4) is stored at index ``b - 1`` and is
also encoded as the ``+-1`` triple ``m_b`` of the tetrahedron, whose entries
always multiply to ``+1``.

Distribution arrays are indexed ``p[x, z, a, b, c]`` with shape (3, 3, 2, 4, 2).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import ValidityError

TETRA = np.array(
    [
        [+1, +1, +1],
        [+1, -1, -1],
        [-1, +1, -1],
        [-1, -1, +1],
    ],
    dtype=np.int64,
)
SIGNS = np.array([+1, -1], dtype=np.int64)
SHAPE = (3, 3, 2, 4, 2)

NEG_TOL = 1e-9
NORM_TOL = 1e-10


def _frozen(arr, shape) -> np.ndarray:
    out = np.array(arr, dtype=float).reshape(shape)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class CorrelatorSet:
    """The 63 correlators of the 3x3-setting, (2,4,2)-outcome experiment.

    Index conventions: ``AB[x, y]``, ``BC[y, z]``, ``AC[x, z]``,
    ``ABC[x, y, z]`` with zero-based setting and bit indices.
    """

    A: np.ndarray = field(default_factory=lambda: np.zeros(3))
    B: np.ndarray = field(default_factory=lambda: np.zeros(3))
    C: np.ndarray = field(default_factory=lambda: np.zeros(3))
    AB: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    BC: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    AC: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    ABC: np.ndarray = field(default_factory=lambda: np.zeros((3, 3, 3)))

    _SHAPES = {
        "A": (3,),
        "B": (3,),
        "C": (3,),
        "AB": (3, 3),
        "BC": (3, 3),
        "AC": (3, 3),
        "ABC": (3, 3, 3),
    }

    def __post_init__(self):
        for name, shape in self._SHAPES.items():
            object.__setattr__(self, name, _frozen(getattr(self, name), shape))

    @classmethod
    def zeros(cls) -> "CorrelatorSet":
        return cls()

    def as_vector(self) -> np.ndarray:
        """All 63 correlators concatenated in the order A, B, C, AB, BC, AC, ABC."""
        return np.concatenate([getattr(self, k).ravel() for k in self._SHAPES])

    @classmethod
    def from_vector(cls, vec) -> "CorrelatorSet":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (63,):
            raise ValidityError(f"expected 63 correlators, got shape {vec.shape}")
        parts, i = {}, 0
        for name, shape in cls._SHAPES.items():
            n = int(np.prod(shape))
            parts[name] = vec[i : i + n].reshape(shape)
            i += n
        return cls(**parts)

    def max_abs_diff(self, other: "CorrelatorSet") -> float:
        return float(np.max(np.abs(self.as_vector() - other.as_vector())))

    def labelled(self):
        """Yield ``(label, value)`` pairs with one-based labels such as ``A1B2C3``."""
        for x in range(3):
            yield f"A{x + 1}", float(self.A[x])
        for y in range(3):
            yield f"B{y + 1}", float(self.B[y])
        for z in range(3):
            yield f"C{z + 1}", float(self.C[z])
        for x, y in product(range(3), repeat=2):
            yield f"A{x + 1}B{y + 1}", float(self.AB[x, y])
        for y, z in product(range(3), repeat=2):
            yield f"B{y + 1}C{z + 1}", float(self.BC[y, z])
        for x, z in product(range(3), repeat=2):
            yield f"A{x + 1}C{z + 1}", float(self.AC[x, z])
        for x, y, z in product(range(3), repeat=3):
            yield f"A{x + 1}B{y + 1}C{z + 1}", float(self.ABC[x, y, z])

    def to_dict(self) -> dict:
        return dict(self.labelled())

    @classmethod
    def from_dict(cls, data: dict) -> "CorrelatorSet":
        ref = cls.zeros()
        vec = []
        for label, _ in ref.labelled():
            if label not in data:
                raise ValidityError(f"missing correlator {label!r}")
            vec.append(float(data[label]))
        return cls.from_vector(np.array(vec))

    def to_json(self, **kw) -> str:
        return json.dumps({"correlators": self.to_dict()}, **kw)

    @classmethod
    def from_json(cls, text: str) -> "CorrelatorSet":
        data = json.loads(text)
        return cls.from_dict(data.get("correlators", data))


@dataclass(frozen=True, eq=False)
class TripartiteDistribution:
    p: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.p, dtype=float)
        if arr.shape != SHAPE:
            raise ValidityError(f"distribution must have shape {SHAPE}, got {arr.shape}")
        object.__setattr__(self, "p", _frozen(arr, SHAPE))

    def validate(self, neg_tol: float = 1e-12, norm_tol: float = NORM_TOL) -> "TripartiteDistribution":
        idx = np.unravel_index(np.argmin(self.p), SHAPE)
        if self.p[idx] < -neg_tol:
            raise ValidityError(
                f"negative probability {self.p[idx]:.3e} at {_label(idx)}"
            )
        sums = self.p.sum(axis=(2, 3, 4))
        bad = np.argwhere(np.abs(sums - 1.0) > norm_tol)
        if len(bad):
            x, z = bad[0]
            raise ValidityError(
                f"probabilities for x={x + 1}, z={z + 1} sum to {sums[x, z]:.12g}"
            )
        return self

    @classmethod
    def uniform(cls) -> "TripartiteDistribution":
        return cls(np.full(SHAPE, 1.0 / 16))

    def linf(self, other: "TripartiteDistribution") -> float:
        return float(np.max(np.abs(self.p - other.p)))

    def rows(self):
        """Yield ``(x, z, a, b, c, p)`` with one-based settings and b, signed a and c."""
        for x, z, ia, b, ic in product(range(3), range(3), range(2), range(4), range(2)):
            yield x + 1, z + 1, int(SIGNS[ia]), b + 1, int(SIGNS[ic]), float(self.p[x, z, ia, b, ic])

    def to_json(self, **kw) -> str:
        entries = [dict(x=x, z=z, a=a, b=b, c=c, p=p) for x, z, a, b, c, p in self.rows()]
        return json.dumps({"distribution": entries}, **kw)

    @classmethod
    def from_records(cls, records) -> "TripartiteDistribution":
        p = np.full(SHAPE, np.nan)
        for n, rec in enumerate(records):
            try:
                x, z, a, b, c = (int(rec[k]) for k in "xzabc")
                val = float(rec["p"])
            except (KeyError, ValueError, TypeError) as exc:
                raise ValidityError(f"malformed distribution entry #{n}: {rec!r}") from exc
            if not (1 <= x <= 3 and 1 <= z <= 3 and 1 <= b <= 4 and a in (1, -1) and c in (1, -1)):
                raise ValidityError(f"entry out of range: x={x} z={z} a={a} b={b} c={c}")
            p[x - 1, z - 1, (1 - a) // 2, b - 1, (1 - c) // 2] = val
        if np.isnan(p).any():
            idx = tuple(int(i) for i in np.argwhere(np.isnan(p))[0])
            raise ValidityError(f"missing distribution entry {_label(idx)}")
        return cls(p)

    @classmethod
    def from_json(cls, text: str) -> "TripartiteDistribution":
        data = json.loads(text)
        return cls.from_records(data["distribution"] if isinstance(data, dict) else data)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "z", "a", "b", "c", "p"])
        for x, z, a, b, c, p in self.rows():
            w.writerow([x, z, a, b, c, f"{p:.12g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TripartiteDistribution":
        return cls.from_records(list(csv.DictReader(io.StringIO(text))))


def _label(idx) -> str:
    x, z, ia, b, ic = idx
    return f"(x={x + 1}, z={z + 1}, a={int(SIGNS[ia]):+d}, b={b + 1}, c={int(SIGNS[ic]):+d})"


def correlators_to_distribution(corr: CorrelatorSet, *, check: bool = True) -> TripartiteDistribution:
    """Expand correlators into probabilities (1/16 expansion over a, b-bits, c)."""
    s = SIGNS.astype(float)
    t = TETRA.astype(float)  # t[b, y] = b^y
    p = np.ones(SHAPE)
    p = p + np.einsum("a,x->xa", s, corr.A)[:, None, :, None, None]
    p = p + (t @ corr.B)[None, None, None, :, None]
    p = p + np.einsum("c,z->zc", s, corr.C)[None, :, None, None, :]
    p = p + np.einsum("a,by,xy->xab", s, t, corr.AB)[:, None, :, :, None]
    p = p + np.einsum("c,by,yz->zbc", s, t, corr.BC)[None, :, None, :, :]
    p = p + np.einsum("a,c,xz->xzac", s, s, corr.AC)[:, :, :, None, :]
    p = p + np.einsum("a,c,by,xyz->xzabc", s, s, t, corr.ABC)
    p = p / 16.0
    if check:
        idx = np.unravel_index(np.argmin(p), SHAPE)
        if p[idx] < -NEG_TOL:
            raise ValidityError(
                f"correlators give negative probability {p[idx]:.3e} at {_label(idx)}"
            )
    return TripartiteDistribution(p)


def distribution_to_correlators(dist: TripartiteDistribution) -> CorrelatorSet:
    """Recover the 63 correlators.

    Marginal correlators are averaged over the setting of the party they do
    not involve, which is exact for no-signalling input.
    """
    p = dist.p
    s = SIGNS.astype(float)
    t = TETRA.astype(float)
    A = np.einsum("xzabc,a->xz", p, s).mean(axis=1)
    B = np.einsum("xzabc,by->xzy", p, t).mean(axis=(0, 1))
    C = np.einsum("xzabc,c->xz", p, s).mean(axis=0)
    AB = np.einsum("xzabc,a,by->xzy", p, s, t).mean(axis=1)
    BC = np.einsum("xzabc,by,c->xzy", p, t, s).mean(axis=0).T
    AC = np.einsum("xzabc,a,c->xz", p, s, s)
    ABC = np.einsum("xzabc,a,by,c->xyz", p, s, t, s)
    return CorrelatorSet(A=A, B=B, C=C, AB=AB, BC=BC, AC=AC, ABC=ABC)
