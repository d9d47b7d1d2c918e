"""Finite nonnegative matrices as a copy/discard category.

A :class:`Morphism` stores a dense tensor whose leading axes index the
domain atoms and whose trailing axes index the codomain atoms, so that
``m.array[x..., y...]`` reads as ``M(y | x)``.  Everything here is pure and
returns fresh, read-only values.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TOL = 1e-9
ZERO_COLUMN_TOL = 1e-12


class CompositionError(ValueError):
    """Raised when two morphisms cannot be plugged together."""


@dataclass(frozen=True)
class FinObject:
    """An ordered sequence of named finite atoms.

    Parameters
    ----------
    atoms : tuple of (str, int)
        ``(name, cardinality)`` pairs.  The empty tuple is the unit object.
    """

    atoms: tuple = ()

    def __post_init__(self):
        atoms = tuple((str(n), int(c)) for n, c in self.atoms)
        names = [n for n, _ in atoms]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate atom names in {names}")
        for n, c in atoms:
            if c < 1:
                raise ValueError(f"atom {n!r} has cardinality {c}")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def of(cls, *pairs) -> "FinObject":
        return cls(tuple(pairs))

    @property
    def names(self) -> tuple:
        return tuple(n for n, _ in self.atoms)

    @property
    def cards(self) -> tuple:
        return tuple(c for _, c in self.atoms)

    @property
    def size(self) -> int:
        return int(np.prod(self.cards, dtype=np.int64)) if self.atoms else 1

    @property
    def is_unit(self) -> bool:
        return not self.atoms

    def __len__(self):
        return len(self.atoms)

    def card(self, name: str) -> int:
        return dict(self.atoms)[name]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown atom {name!r}") from None

    def sub(self, names: Iterable[str]) -> "FinObject":
        lookup = dict(self.atoms)
        out = []
        for n in names:
            if n not in lookup:
                raise KeyError(f"unknown atom {n!r}")
            out.append((n, lookup[n]))
        return FinObject(tuple(out))

    def without(self, names: Iterable[str]) -> "FinObject":
        drop = set(names)
        return FinObject(tuple(a for a in self.atoms if a[0] not in drop))

    def tensor(self, other: "FinObject") -> "FinObject":
        """Concatenate atoms, suffixing ``~k`` onto clashing names."""
        taken = set(self.names)
        out = list(self.atoms)
        for n, c in other.atoms:
            name = n
            k = 1
            while name in taken:
                name = f"{n}~{k}"
                k += 1
            taken.add(name)
            out.append((name, c))
        return FinObject(tuple(out))

    def rename(self, mapping: dict) -> "FinObject":
        return FinObject(tuple((mapping.get(n, n), c) for n, c in self.atoms))

    def values(self):
        """Iterate over all value tuples in row-major order."""
        return np.ndindex(*self.cards) if self.atoms else iter([()])

    def __repr__(self):
        inner = ", ".join(f"{n}:{c}" for n, c in self.atoms)
        return f"FinObject({inner})"


UNIT = FinObject(())


def _as_obj(obj) -> FinObject:
    if isinstance(obj, FinObject):
        return obj
    if isinstance(obj, int):
        return FinObject((("x", obj),))
    return FinObject(tuple(obj))


class Morphism:
    """A nonnegative tensor read as a matrix from ``dom`` to ``cod``."""

    __slots__ = ("dom", "cod", "array")

    def __init__(self, dom: FinObject, cod: FinObject, array, check: bool = True):
        dom = _as_obj(dom)
        cod = _as_obj(cod)
        arr = np.array(array, dtype=np.float64)
        shape = dom.cards + cod.cards
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise CompositionError(
                f"entries of size {arr.size} do not fit shape {shape}")
        arr = arr.reshape(shape)
        if check:
            if not np.all(np.isfinite(arr)):
                raise ValueError("morphism entries must be finite")
            if np.any(arr < 0):
                raise ValueError("morphism entries must be nonnegative")
        arr.flags.writeable = False
        self.dom = dom
        self.cod = cod
        self.array = arr

    # value semantics -----------------------------------------------------
    @property
    def matrix(self) -> np.ndarray:
        """Entries as a ``|dom| x |cod|`` matrix."""
        return self.array.reshape(self.dom.size, self.cod.size)

    @property
    def is_state(self) -> bool:
        return self.dom.is_unit

    @property
    def is_effect(self) -> bool:
        return self.cod.is_unit

    @property
    def is_scalar(self) -> bool:
        return self.dom.is_unit and self.cod.is_unit

    def scalar(self) -> float:
        if not self.is_scalar:
            raise TypeError("not a scalar")
        return float(self.array.reshape(()))

    def allclose(self, other: "Morphism", tol: float = DEFAULT_TOL) -> bool:
        if self.dom.cards != other.dom.cards or self.cod.cards != other.cod.cards:
            return False
        return bool(np.max(np.abs(self.array - other.array), initial=0.0) <= tol)

    def max_diff(self, other: "Morphism") -> float:
        return float(np.max(np.abs(self.array - other.array), initial=0.0))

    def __repr__(self):
        return f"Morphism({self.dom!r} -> {self.cod!r})"

    def __mul__(self, k):
        return Morphism(self.dom, self.cod, self.array * float(k))

    __rmul__ = __mul__

    def __add__(self, other: "Morphism"):
        if self.dom.cards != other.dom.cards or self.cod.cards != other.cod.cards:
            raise CompositionError("cannot add morphisms of different types")
        return Morphism(self.dom, self.cod, self.array + other.array)

    def with_types(self, dom: FinObject | None = None, cod: FinObject | None = None):
        """Re-label dom/cod with objects of identical cardinalities."""
        dom = self.dom if dom is None else dom
        cod = self.cod if cod is None else cod
        if dom.cards != self.dom.cards or cod.cards != self.cod.cards:
            raise CompositionError("relabelling must keep cardinalities")
        return Morphism(dom, cod, self.array, check=False)

    def rename(self, mapping: dict) -> "Morphism":
        return Morphism(self.dom.rename(mapping), self.cod.rename(mapping),
                        self.array, check=False)


# generators ---------------------------------------------------------------

def identity(obj) -> Morphism:
    obj = _as_obj(obj)
    n = obj.size
    return Morphism(obj, obj, np.eye(n).reshape(obj.cards + obj.cards))


def swap(a, b) -> Morphism:
    """The symmetry ``a ⊗ b -> b ⊗ a``."""
    a, b = _as_obj(a), _as_obj(b)
    src = a.tensor(b)
    dst = FinObject(src.atoms[len(a):] + src.atoms[:len(a)])
    return permute_cod(identity(src), list(dst.names)).with_types(src, dst)


def _leg_names(obj: FinObject, n: int) -> FinObject:
    out = UNIT
    for _ in range(n):
        out = out.tensor(obj)
    return out


def copy(obj, n: int = 2) -> Morphism:
    """The n-fold copy map; ``copy(obj, 0)`` is the discard effect."""
    obj = _as_obj(obj)
    if n < 0:
        raise ValueError("copy arity must be nonnegative")
    if n == 0:
        return discard(obj)
    size = obj.size
    arr = np.zeros((size,) * (n + 1))
    idx = np.arange(size)
    arr[(idx,) * (n + 1)] = 1.0
    legs = _leg_names(obj, n)
    return Morphism(obj, legs, arr.reshape(obj.cards * (n + 1)))


def discard(obj) -> Morphism:
    obj = _as_obj(obj)
    return Morphism(obj, UNIT, np.ones(obj.cards))


def cap(obj) -> Morphism:
    """The effect ``obj ⊗ obj -> I`` with value ``δ(x, y)``."""
    obj = _as_obj(obj)
    both = obj.tensor(obj)
    return Morphism(both, UNIT, np.eye(obj.size).reshape(both.cards))


def uniform_state(obj) -> Morphism:
    obj = _as_obj(obj)
    return Morphism(UNIT, obj, np.full(obj.cards, 1.0 / obj.size))


def _point(obj: FinObject, value) -> np.ndarray:
    value = tuple(np.atleast_1d(value).tolist()) if not isinstance(value, tuple) else value
    if len(value) != len(obj):
        raise IndexError(f"value {value} does not match {obj!r}")
    for v, c in zip(value, obj.cards):
        if not 0 <= int(v) < c:
            raise IndexError(f"value {value} out of range for {obj!r}")
    arr = np.zeros(obj.cards)
    arr[tuple(int(v) for v in value)] = 1.0
    return arr


def sharp_state(obj, value) -> Morphism:
    obj = _as_obj(obj)
    return Morphism(UNIT, obj, _point(obj, value))


def sharp_effect(obj, value) -> Morphism:
    obj = _as_obj(obj)
    return Morphism(obj, UNIT, _point(obj, value))


def zero(dom, cod) -> Morphism:
    dom, cod = _as_obj(dom), _as_obj(cod)
    return Morphism(dom, cod, np.zeros(dom.cards + cod.cards))


def scalar(value: float) -> Morphism:
    return Morphism(UNIT, UNIT, np.array(float(value)))


def state(obj, probs) -> Morphism:
    return Morphism(UNIT, _as_obj(obj), probs)


def generator(kind: str, obj, value=None, n: int = 2) -> Morphism:
    """Build a generator by name (``identity``, ``swap``, ``copy``, ...)."""
    obj = _as_obj(obj)
    if kind == "identity":
        return identity(obj)
    if kind == "swap":
        return swap(obj, obj)
    if kind == "copy":
        return copy(obj, n)
    if kind == "discard":
        return discard(obj)
    if kind == "cap":
        return cap(obj)
    if kind == "uniform_state":
        return uniform_state(obj)
    if kind == "sharp_state":
        return sharp_state(obj, value)
    if kind == "sharp_effect":
        return sharp_effect(obj, value)
    if kind == "zero":
        return zero(UNIT, obj)
    raise ValueError(f"unknown generator kind {kind!r}")


# composition ---------------------------------------------------------------

def compose(f: Morphism, g: Morphism) -> Morphism:
    """Diagrammatic composition: first ``f``, then ``g``."""
    if f.cod.cards != g.dom.cards:
        raise CompositionError(
            f"cannot compose {f.cod!r} into {g.dom!r}")
    k = len(f.cod)
    arr = np.tensordot(f.array, g.array, axes=k) if k else np.multiply.outer(f.array, g.array)
    return Morphism(f.dom, g.cod, arr, check=False)


def compose_all(*ms: Morphism) -> Morphism:
    out = ms[0]
    for m in ms[1:]:
        out = compose(out, m)
    return out


def tensor(f: Morphism, g: Morphism) -> Morphism:
    """Parallel composition; atom sequences concatenate."""
    arr = np.multiply.outer(f.array, g.array)
    nfd, nfc, ngd = len(f.dom), len(f.cod), len(g.dom)
    # axes are (fdom, fcod, gdom, gcod); move gdom before fcod
    order = (list(range(nfd)) + list(range(nfd + nfc, nfd + nfc + ngd))
             + list(range(nfd, nfd + nfc)) + list(range(nfd + nfc + ngd, arr.ndim)))
    arr = np.transpose(arr, order)
    return Morphism(f.dom.tensor(g.dom), f.cod.tensor(g.cod), arr, check=False)


def tensor_all(*ms: Morphism) -> Morphism:
    out = scalar(1.0)
    for m in ms:
        out = tensor(out, m)
    return out


def permute_cod(f: Morphism, names: Sequence[str]) -> Morphism:
    """Reorder codomain atoms to follow ``names``."""
    names = list(names)
    if sorted(names) != sorted(f.cod.names):
        raise KeyError(f"{names} is not a permutation of {f.cod.names}")
    nd = len(f.dom)
    order = list(range(nd)) + [nd + f.cod.index(n) for n in names]
    return Morphism(f.dom, f.cod.sub(names), np.transpose(f.array, order), check=False)


def permute_dom(f: Morphism, names: Sequence[str]) -> Morphism:
    names = list(names)
    if sorted(names) != sorted(f.dom.names):
        raise KeyError(f"{names} is not a permutation of {f.dom.names}")
    nd = len(f.dom)
    order = [f.dom.index(n) for n in names] + list(range(nd, f.array.ndim))
    return Morphism(f.dom.sub(names), f.cod, np.transpose(f.array, order), check=False)


def marginalize(f: Morphism, keep: Iterable[str]) -> Morphism:
    """Sum out every codomain atom not listed in ``keep``."""
    keep = list(keep)
    for n in keep:
        f.cod.index(n)
    nd = len(f.dom)
    drop = tuple(nd + i for i, n in enumerate(f.cod.names) if n not in keep)
    arr = f.array.sum(axis=drop) if drop else f.array
    kept_order = [n for n in f.cod.names if n in keep]
    g = Morphism(f.dom, f.cod.sub(kept_order), arr, check=False)
    return permute_cod(g, keep)


def column_sums(f: Morphism) -> np.ndarray:
    """``Σ_y f(y|x)`` for every input ``x``, shaped like the domain."""
    return f.matrix.sum(axis=1).reshape(f.dom.cards)


def normalize(f: Morphism) -> Morphism:
    """Rescale each input column to sum to one; zero columns stay zero."""
    mat = f.matrix
    sums = mat.sum(axis=1)
    safe = np.where(sums > ZERO_COLUMN_TOL, sums, 1.0)
    out = np.where((sums > ZERO_COLUMN_TOL)[:, None], mat / safe[:, None], 0.0)
    return Morphism(f.dom, f.cod, out.reshape(f.array.shape), check=False)


def conditional(f: Morphism, on: Iterable[str]) -> Morphism:
    """The conditional ``f|_Z : dom ⊗ Z -> cod \\ Z``.

    Columns whose normalising sum vanishes are returned as zero columns.
    """
    on = list(on)
    rest = [n for n in f.cod.names if n not in on]
    g = permute_cod(f, on + rest)
    # the conditioned atoms become inputs: shape already (dom, Z, rest)
    moved = Morphism(f.dom.tensor(f.cod.sub(on)), f.cod.sub(rest), g.array, check=False)
    return normalize(moved)


def soft_conditional(f: Morphism, on: Iterable[str], evidence: Morphism,
                     mode: str = "upper") -> Morphism:
    """Update ``f`` on the atoms ``on`` with fuzzy evidence.

    ``upper`` takes an effect on ``Z``, plugs it in before normalising.
    ``lower`` takes a state on ``Z`` and mixes the sharp conditionals.
    """
    on = list(on)
    zobj = f.cod.sub(on)
    rest = [n for n in f.cod.names if n not in on]
    if mode == "upper":
        if evidence.dom.cards != zobj.cards or not evidence.is_effect:
            raise CompositionError("upper conditioning needs an effect on the conditioned atoms")
        g = permute_cod(f, on + rest)
        nd, nz = len(f.dom), len(on)
        weights = evidence.array.reshape((1,) * nd + zobj.cards + (1,) * len(rest))
        arr = (g.array * weights).sum(axis=tuple(range(nd, nd + nz)))
        return normalize(Morphism(f.dom, f.cod.sub(rest), arr, check=False))
    if mode == "lower":
        if evidence.cod.cards != zobj.cards or not evidence.is_state:
            raise CompositionError("lower conditioning needs a state on the conditioned atoms")
        cond = conditional(f, on)
        nd, nz = len(f.dom), len(on)
        ev = evidence.array.reshape((1,) * nd + zobj.cards + (1,) * len(rest))
        arr = (cond.array * ev).sum(axis=tuple(range(nd, nd + nz)))
        return Morphism(f.dom, f.cod.sub(rest), arr, check=False)
    raise ValueError(f"unknown conditioning mode {mode!r}")


# classification -------------------------------------------------------------

@dataclass(frozen=True)
class MorphismClass:
    is_channel: bool
    is_partial_channel: bool
    is_deterministic: bool
    is_normalised_state: bool
    is_sharp: bool
    is_zero: bool


def classify(f: Morphism, tol: float = DEFAULT_TOL) -> MorphismClass:
    sums = f.matrix.sum(axis=1)
    channel = bool(np.all(np.abs(sums - 1.0) <= tol))
    partial = bool(np.all((np.abs(sums - 1.0) <= tol) | (sums <= tol)))
    mat = f.matrix
    zero_one = np.all((np.abs(mat) <= tol) | (np.abs(mat - 1.0) <= tol))
    deterministic = bool(zero_one and partial)
    is_zero = bool(np.all(np.abs(mat) <= tol))
    normalised_state = f.is_state and channel
    sharp = f.is_state and deterministic and not is_zero
    return MorphismClass(channel, partial, deterministic, normalised_state, sharp, is_zero)


def is_deterministic_by_copy(f: Morphism, tol: float = DEFAULT_TOL) -> bool:
    """Check ``f ; copy == copy ; (f ⊗ f)`` literally."""
    lhs = compose(f, copy(f.cod))
    rhs = compose(copy(f.dom), tensor(f, f))
    return lhs.allclose(rhs.with_types(lhs.dom, lhs.cod), tol)


# dilation -------------------------------------------------------------------

def functional_dilation(c: Morphism, noise_name: str = "U", tol: float = DEFAULT_TOL):
    """Split a channel into a deterministic map and a noise state.

    Returns ``(f, U, lam)`` with ``f : dom ⊗ U -> cod`` deterministic and
    ``c = f ∘ (id ⊗ lam)``.  ``U`` enumerates whole response functions
    ``dom-value -> cod-value``; ``lam`` weights each one by the product of
    the per-input probabilities.  A deterministic ``c`` gets the unit object
    as its noise.
    """
    if not classify(c, tol).is_channel:
        raise ValueError("functional dilation needs a channel")
    if classify(c, tol).is_deterministic:
        return c, UNIT, scalar(1.0)
    ndom, ncod = c.dom.size, c.cod.size
    total = ncod ** ndom
    if total > 10 ** 7:
        raise ValueError(f"noise space of size {total} is too large")
    u_obj = FinObject(((noise_name, total),))
    mat = c.matrix
    # response function u assigns output digit (u // ncod**d) % ncod to input d
    u = np.arange(total)
    digits = np.stack([(u // ncod ** d) % ncod for d in range(ndom)])  # (ndom, total)
    lam = np.prod(mat[np.arange(ndom)[:, None], digits], axis=0)
    f = np.zeros((ndom, total, ncod))
    f[np.arange(ndom)[:, None], u[None, :], digits] = 1.0
    fm = Morphism(c.dom.tensor(u_obj), c.cod, f.reshape(c.dom.cards + (total,) + c.cod.cards))
    return fm, u_obj, Morphism(UNIT, u_obj, lam)


def recompose_dilation(f: Morphism, lam: Morphism) -> Morphism:
    """``f ∘ (id ⊗ lam)`` for a dilation triple."""
    nd = len(f.dom) - len(lam.cod)
    dom = FinObject(f.dom.atoms[:nd])
    return compose(tensor(identity(dom), lam).with_types(dom, f.dom), f)
