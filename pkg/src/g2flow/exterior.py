"""Exterior algebra over a fixed oriented 7-dimensional inner-product space.

A k-form is stored densely as a coefficient vector over the C(7,k) strictly
increasing multi-indices in lexicographic order.  Every operation (wedge,
interior product, metric inner product, Hodge star) reduces to signed sums of
coefficient products against tables built once at import, so identities with
integer inputs hold to machine precision and golden cases hold exactly.

Conventions
-----------
* Basis 1-forms are named e^1 .. e^7; ``e13`` style shorthand in docstrings
  means e^1 ^ e^3.
* Monomials of equal degree are orthonormal for the identity metric; for a
  general metric g the Gram matrix on k-forms is the k-th compound (minor
  determinant matrix) of g^{-1}.
* The positive orientation is e^{1234567}; a Metric carries an orientation
  sign that flips the volume form and the star.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegreeError, MetricError

DIM = 7


def _build_bases():
    bases = []
    for k in range(DIM + 1):
        bases.append(tuple(itertools.combinations(range(1, DIM + 1), k)))
    return tuple(bases)


#: BASIS[k] lists the increasing multi-indices of degree k in lexicographic order.
BASIS = _build_bases()
#: BASIS_POS[k] maps a multi-index tuple to its position in BASIS[k].
BASIS_POS = tuple({idx: p for p, idx in enumerate(b)} for b in BASIS)
#: DIMS[k] = C(7, k).
DIMS = tuple(len(b) for b in BASIS)


def sort_sign(seq):
    """Sort an index sequence, returning (parity sign, sorted tuple).

    Returns (0, ()) when the sequence has a repeated index.
    """
    lst = list(seq)
    sign = 1
    for i in range(len(lst)):
        for j in range(len(lst) - 1 - i):
            if lst[j] > lst[j + 1]:
                lst[j], lst[j + 1] = lst[j + 1], lst[j]
                sign = -sign
            elif lst[j] == lst[j + 1]:
                return 0, ()
    return sign, tuple(lst)


def merge_sign(left, right):
    """Sign of merging two increasing index tuples into one increasing tuple.

    Returns (0, ()) when the tuples share an index.
    """
    if set(left) & set(right):
        return 0, ()
    swaps = sum(1 for a in left for b in right if a > b)
    return (-1 if swaps % 2 else 1), tuple(sorted(left + right))


class MultiIndex(tuple):
    """Strictly increasing tuple of axis labels in 1..7 naming a basis monomial."""

    def __new__(cls, indices):
        idx = tuple(int(i) for i in indices)
        if any(not 1 <= i <= DIM for i in idx):
            raise ValueError(f"indices must lie in 1..{DIM}, got {idx}")
        if any(a >= b for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices must be strictly increasing, got {idx}")
        return super().__new__(cls, idx)

    @property
    def degree(self):
        return len(self)

    @property
    def position(self):
        """Position of this monomial within the lexicographic basis of its degree."""
        return BASIS_POS[len(self)][tuple(self)]


def _build_wedge_tables():
    tables = {}
    for k in range(DIM + 1):
        for l in range(DIM + 1 - k):
            table = np.zeros((DIMS[k], DIMS[l], DIMS[k + l]))
            for a, lhs in enumerate(BASIS[k]):
                for b, rhs in enumerate(BASIS[l]):
                    sign, merged = merge_sign(lhs, rhs)
                    if sign:
                        table[a, b, BASIS_POS[k + l][merged]] = sign
            tables[k, l] = table
    return tables


def _build_contraction_tables():
    tables = {}
    for k in range(1, DIM + 1):
        table = np.zeros((DIM, DIMS[k], DIMS[k - 1]))
        for a, idx in enumerate(BASIS[k]):
            for pos, i in enumerate(idx):
                rest = idx[:pos] + idx[pos + 1 :]
                table[i - 1, a, BASIS_POS[k - 1][rest]] = -1.0 if pos % 2 else 1.0
        tables[k] = table
    return tables


def _build_complements():
    full = set(range(1, DIM + 1))
    comp_index, comp_sign = [], []
    for k in range(DIM + 1):
        ci = np.empty(DIMS[k], dtype=np.intp)
        cs = np.empty(DIMS[k])
        for a, idx in enumerate(BASIS[k]):
            comp = tuple(sorted(full - set(idx)))
            sign, _ = merge_sign(idx, comp)
            ci[a] = BASIS_POS[DIM - k][comp]
            cs[a] = sign
        comp_index.append(ci)
        comp_sign.append(cs)
    return tuple(comp_index), tuple(comp_sign)


def _build_splits():
    # For degree k >= 2: monomial = first index wedged with the remaining tail.
    first, rest = [None, None], [None, None]
    for k in range(2, DIM + 1):
        first.append(np.array([idx[0] - 1 for idx in BASIS[k]], dtype=np.intp))
        rest.append(np.array([BASIS_POS[k - 1][idx[1:]] for idx in BASIS[k]], dtype=np.intp))
    return first, rest


def _build_row_splits():
    # All k ways of pulling a single index out of a degree-k monomial, with
    # the alternating sign of the pull-out slot; drives the sparse assembly
    # of exterior powers (each output row has exactly k contributing pairs).
    firsts, rests = [None, None], [None, None]
    for k in range(2, DIM + 1):
        f = np.empty((k, DIMS[k]), dtype=np.intp)
        r = np.empty((k, DIMS[k]), dtype=np.intp)
        for c, idx in enumerate(BASIS[k]):
            for s in range(k):
                f[s, c] = idx[s] - 1
                r[s, c] = BASIS_POS[k - 1][idx[:s] + idx[s + 1 :]]
        firsts.append(f)
        rests.append(r)
    return firsts, rests


#: WEDGE[k, l][a, b, c] = sign of basis_k[a] ^ basis_l[b] on basis_{k+l}[c].
WEDGE = _build_wedge_tables()
#: CONTRACT[k][i, a, b] = sign of iota_{e_{i+1}} basis_k[a] on basis_{k-1}[b].
CONTRACT = _build_contraction_tables()
COMPL_INDEX, COMPL_SIGN = _build_complements()
_SPLIT_FIRST, _SPLIT_REST = _build_splits()
_ROW_FIRST, _ROW_REST = _build_row_splits()

_TOP_INDEX = MultiIndex(range(1, DIM + 1))


@dataclass(frozen=True, eq=False)
class Form:
    """Dense k-form: ``coeffs[p]`` multiplies the p-th lexicographic monomial."""

    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        if not 0 <= self.degree <= DIM:
            raise DegreeError(f"degree must be in 0..{DIM}, got {self.degree}")
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.shape != (DIMS[self.degree],):
            raise ValueError(
                f"degree {self.degree} needs {DIMS[self.degree]} coefficients, "
                f"got shape {coeffs.shape}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zero(cls, degree):
        return cls(degree, np.zeros(DIMS[degree]))

    @classmethod
    def monomial(cls, indices, coef=1.0):
        """``coef * e^indices`` with indices given in any order (sign adjusted)."""
        sign, idx = sort_sign(indices)
        if sign == 0 and len(tuple(indices)) > 0:
            raise ValueError(f"repeated index in {tuple(indices)}")
        coeffs = np.zeros(DIMS[len(idx)])
        coeffs[BASIS_POS[len(idx)][idx]] = sign * coef
        return cls(len(idx), coeffs)

    @classmethod
    def from_terms(cls, degree, terms):
        """Build from a {multi-index tuple: coefficient} mapping."""
        coeffs = np.zeros(DIMS[degree])
        for idx, coef in terms.items():
            mi = MultiIndex(idx)
            if mi.degree != degree:
                raise DegreeError(f"term {tuple(mi)} has degree {mi.degree}, expected {degree}")
            coeffs[mi.position] += coef
        return cls(degree, coeffs)

    def terms(self, tol=0.0):
        """Yield (MultiIndex, coefficient) for entries with |coef| > tol."""
        for pos, idx in enumerate(BASIS[self.degree]):
            if abs(self.coeffs[pos]) > tol:
                yield MultiIndex(idx), float(self.coeffs[pos])

    def norm(self):
        """Euclidean norm of the coefficient vector."""
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other):
        self._check_same_degree(other)
        return Form(self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_same_degree(other)
        return Form(self.degree, self.coeffs - other.coeffs)

    def __neg__(self):
        return Form(self.degree, -self.coeffs)

    def __mul__(self, scalar):
        return Form(self.degree, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Form(self.degree, self.coeffs / float(scalar))

    def _check_same_degree(self, other):
        if not isinstance(other, Form):
            raise TypeError(f"expected Form, got {type(other).__name__}")
        if self.degree != other.degree:
            raise DegreeError(f"degree mismatch: {self.degree} vs {other.degree}")

    def __repr__(self):
        parts = [f"{c:+g}*e{''.join(map(str, i))}" for i, c in self.terms()] or ["0"]
        return f"Form({self.degree}: {' '.join(parts)})"


def exterior_powers(matrix):
    """Matrices of the induced maps on all exterior powers.

    ``matrix`` sends e^j to sum_i matrix[i, j] e^i; entry [I, J] of the k-th
    output is the minor det(matrix[I, J]), built recursively with the wedge
    tables rather than by enumerating minors.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (DIM, DIM):
        raise ValueError(f"expected a {DIM}x{DIM} matrix, got {matrix.shape}")
    powers = [np.ones((1, 1)), matrix.copy()]
    for k in range(2, DIM + 1):
        cols_first = matrix[:, _SPLIT_FIRST[k]]
        cols_rest = powers[k - 1][:, _SPLIT_REST[k]]
        # Laplace expansion along the first row of each minor: output row c
        # receives one signed product per way of pulling an index out of c.
        out = np.zeros((DIMS[k], DIMS[k]))
        for s in range(k):
            term = cols_first[_ROW_FIRST[k][s]] * cols_rest[_ROW_REST[k][s]]
            if s % 2:
                out -= term
            else:
                out += term
        powers.append(out)
    return powers


def exterior_powers_batch(mats, max_degree):
    """Exterior powers up to ``max_degree`` for a stack of matrices.

    Same recursion as :func:`exterior_powers` with a leading batch axis;
    returns a list indexed by degree whose entry k has shape
    (batch, C(7,k), C(7,k)).
    """
    mats = np.asarray(mats, dtype=float)
    powers = [np.ones((mats.shape[0], 1, 1)), mats]
    for k in range(2, max_degree + 1):
        cols_first = mats[:, :, _SPLIT_FIRST[k]]
        cols_rest = powers[k - 1][:, :, _SPLIT_REST[k]]
        out = np.zeros((mats.shape[0], DIMS[k], DIMS[k]))
        for s in range(k):
            term = cols_first[:, _ROW_FIRST[k][s], :] * cols_rest[:, _ROW_REST[k][s], :]
            if s % 2:
                out -= term
            else:
                out += term
        powers.append(out)
    return powers


@dataclass(eq=False)
class Metric:
    """Symmetric positive-definite inner product on the 7-dimensional space.

    Instances cache derived operators (inverse, Gram matrices, star blocks);
    treat them as immutable after construction.
    """

    g: np.ndarray
    orientation: int = 1
    _gram: dict = field(default_factory=dict, repr=False)
    _star: dict = field(default_factory=dict, repr=False)
    _spd_checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        if g.shape != (DIM, DIM):
            raise MetricError(f"metric must be {DIM}x{DIM}, got {g.shape}")
        if not np.allclose(g, g.T, atol=1e-12, rtol=0.0):
            raise MetricError("metric must be symmetric")
        if self.orientation not in (1, -1):
            raise MetricError(f"orientation must be +1 or -1, got {self.orientation}")
        g = 0.5 * (g + g.T)
        g.flags.writeable = False
        self.g = g

    @classmethod
    def identity(cls, orientation=1):
        return cls(np.eye(DIM), orientation)

    @classmethod
    def diagonal(cls, entries, orientation=1):
        return cls(np.diag(np.asarray(entries, dtype=float)), orientation)

    def require_spd(self):
        if self._spd_checked:
            return
        if self.min_eigenvalue <= 0.0:
            raise MetricError(
                f"metric is not positive definite (min eigenvalue {self.min_eigenvalue:.3e})"
            )
        self._spd_checked = True

    @cached_property
    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.g)[0])

    @cached_property
    def inv(self):
        inv = np.linalg.inv(self.g)
        inv = 0.5 * (inv + inv.T)
        inv.flags.writeable = False
        return inv

    @cached_property
    def det(self):
        return float(np.linalg.det(self.g))

    @cached_property
    def sqrt_det(self):
        self.require_spd()
        return float(np.sqrt(self.det))

    @cached_property
    def vol(self):
        """Riemannian volume form, orientation sign included."""
        return Form.monomial(_TOP_INDEX, self.orientation * self.sqrt_det)

    def gram(self, k):
        """Gram matrix of the induced inner product on k-forms."""
        if not self._gram:
            powers = exterior_powers(self.inv)
            for deg in range(DIM + 1):
                mat = 0.5 * (powers[deg] + powers[deg].T)
                mat.flags.writeable = False
                self._gram[deg] = mat
        return self._gram[k]

    def star_matrix(self, k):
        """Matrix of the Hodge star from k-forms to (7-k)-forms."""
        if k not in self._star:
            self.require_spd()
            mat = np.zeros((DIMS[DIM - k], DIMS[k]))
            scale = self.sqrt_det * self.orientation
            mat[COMPL_INDEX[k], :] = (COMPL_SIGN[k] * scale)[:, None] * self.gram(k)
            mat.flags.writeable = False
            self._star[k] = mat
        return self._star[k]


def wedge(a, b):
    """Exterior product; raises DegreeError when the degrees sum past 7."""
    k, l = a.degree, b.degree
    if k + l > DIM:
        raise DegreeError(f"wedge of degrees {k} and {l} exceeds dimension {DIM}")
    partial = np.tensordot(a.coeffs, WEDGE[k, l], axes=(0, 0))
    return Form(k + l, b.coeffs @ partial)


def contract(v, a):
    """Interior product of the vector v (components in the e_i frame) into a."""
    if a.degree == 0:
        raise DegreeError("interior product requires degree >= 1")
    v = np.asarray(v, dtype=float)
    if v.shape != (DIM,):
        raise ValueError(f"vector must have shape ({DIM},), got {v.shape}")
    partial = np.tensordot(v, CONTRACT[a.degree], axes=(0, 0))
    return Form(a.degree - 1, a.coeffs @ partial)


def inner(g, a, b):
    """Metric inner product of two forms of equal degree."""
    if a.degree != b.degree:
        raise DegreeError(f"degree mismatch: {a.degree} vs {b.degree}")
    return float(a.coeffs @ g.gram(a.degree) @ b.coeffs)


def star(g, a):
    """Hodge star of a, defined by b ^ star(a) = inner(b, a) vol for all b."""
    return Form(DIM - a.degree, g.star_matrix(a.degree) @ a.coeffs)


def form_norm(g, a):
    """Pointwise metric norm sqrt(inner(a, a))."""
    return float(np.sqrt(max(inner(g, a, a), 0.0)))


def derivation_matrix(action, k):
    """Extend a linear action on 1-forms to k-forms as a derivation.

    ``action[i, j]`` is the coefficient of e^{i+1} in the image of e^{j+1}.
    Returns the matrix of sum_s  e^{j_1} ^ .. ^ action(e^{j_s}) ^ .. ^ e^{j_k}
    on the degree-k basis.
    """
    action = np.asarray(action, dtype=float)
    if k == 0:
        return np.zeros((1, 1))
    out = np.zeros((DIMS[k], DIMS[k]))
    for col, idx in enumerate(BASIS[k]):
        for slot, j in enumerate(idx):
            for i in range(1, DIM + 1):
                coef = action[i - 1, j - 1]
                if coef == 0.0:
                    continue
                replaced = idx[:slot] + (i,) + idx[slot + 1 :]
                sign, sorted_idx = sort_sign(replaced)
                if sign:
                    out[BASIS_POS[k][sorted_idx], col] += sign * coef
    return out
