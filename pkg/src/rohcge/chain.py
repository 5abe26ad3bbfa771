"""Labelled sparse Markov chains and their stationary distribution."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

ROW_SUM_TOL = 1e-9


class ChainError(ValueError):
    """Malformed chain (bad probabilities, rows not summing to one)."""


class NotIrreducible(ChainError):
    """The chain does not have exactly one recurrent class."""


class NoConvergence(RuntimeError):
    """Solver stopped before reaching the residual tolerance.

    The best iterate is kept on ``best``.
    """

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class StateSpaceTooLarge(ChainError):
    pass


@dataclass
class SparseChain:
    labels: list
    matrix: sp.csr_matrix
    _index: dict = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.labels)
        if self.matrix.shape != (n, n):
            raise ChainError(f"matrix shape {self.matrix.shape} does not match {n} labels")
        self.matrix = sp.csr_matrix(self.matrix)
        if self.matrix.nnz and (self.matrix.data.min() < 0 or self.matrix.data.max() > 1 + ROW_SUM_TOL):
            raise ChainError("transition probabilities must lie in [0, 1]")
        rows = np.asarray(self.matrix.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(rows - 1.0) > ROW_SUM_TOL)
        if bad.size:
            i = bad[0]
            raise ChainError(f"row of state {self.labels[i]!r} sums to {rows[i]!r}")
        # silent renormalisation of rounding-level drift
        self.matrix = sp.csr_matrix(sp.diags(1.0 / rows) @ self.matrix)
        if self._index is None:
            self._index = {lab: i for i, lab in enumerate(self.labels)}
        if len(self._index) != n:
            raise ChainError("duplicate state labels")

    def __len__(self):
        return len(self.labels)

    def index(self, label) -> int:
        return self._index[label]

    def prob(self, a, b) -> float:
        return float(self.matrix[self._index[a], self._index[b]])

    def to_csv(self, path):
        """Dump one line per transition: from, to, probability."""
        coo = self.matrix.tocoo()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["from", "to", "prob"])
            for i, j, v in zip(coo.row, coo.col, coo.data):
                w.writerow([_fmt_label(self.labels[i]), _fmt_label(self.labels[j]), repr(float(v))])


def _fmt_label(lab):
    if isinstance(lab, tuple):
        return "|".join(str(x) for x in lab)
    return str(lab)


class ChainBuilder:
    """Accumulate weighted edges between hashable labels."""

    def __init__(self, max_states=None):
        self.max_states = max_states
        self._index = {}
        self._labels = []
        self._rows = []
        self._cols = []
        self._vals = []

    def state(self, label) -> int:
        i = self._index.get(label)
        if i is None:
            i = len(self._labels)
            if self.max_states is not None and i >= self.max_states:
                raise StateSpaceTooLarge(f"more than {self.max_states} states")
            self._index[label] = i
            self._labels.append(label)
        return i

    def add(self, src, dst, prob):
        if prob == 0.0:
            return
        if not 0.0 <= prob <= 1.0 + ROW_SUM_TOL:
            raise ChainError(f"edge {src!r}->{dst!r} has probability {prob!r}")
        self._rows.append(self.state(src))
        self._cols.append(self.state(dst))
        self._vals.append(prob)

    def build(self) -> SparseChain:
        n = len(self._labels)
        m = sp.coo_matrix((self._vals, (self._rows, self._cols)), shape=(n, n)).tocsr()
        m.sum_duplicates()
        return SparseChain(list(self._labels), m, dict(self._index))


@dataclass
class SteadyState:
    labels: list
    distribution: np.ndarray
    residual: float
    converged: bool = True

    def as_dict(self):
        return dict(zip(self.labels, self.distribution))


def recurrent_states(matrix) -> np.ndarray:
    """Indices of the unique closed communicating class; raise if not unique."""
    n = matrix.shape[0]
    ncomp, comp = connected_components(matrix, directed=True, connection="strong")
    coo = matrix.tocoo()
    leaves = np.ones(ncomp, dtype=bool)
    cross = comp[coo.row] != comp[coo.col]
    leaves[np.unique(comp[coo.row[cross]])] = False
    closed = np.flatnonzero(leaves)
    if closed.size != 1:
        raise NotIrreducible(f"chain has {closed.size} closed classes out of {ncomp} (n={n})")
    return np.flatnonzero(comp == closed[0])


def _residual(P, pi):
    return float(np.abs(P.T @ pi - pi).sum())


def solve(chain: SparseChain, tol: float = 1e-10, max_iter: int = 1_000_000, method: str = "direct") -> SteadyState:
    """Stationary distribution of ``chain``.

    ``direct`` solves the balance equations restricted to the recurrent
    class with a sparse LU factorisation and polishes with a few power
    steps. ``power`` runs the lazy chain (I + P)/2, which also converges
    for periodic chains such as the deterministic IR schedule.
    """
    P = chain.matrix
    n = P.shape[0]
    rec = recurrent_states(P)
    if method == "direct":
        pi = np.zeros(n)
        pi[rec] = _direct(P[rec][:, rec])
        res = _residual(P, pi)
        it = 0
        while res > tol and it < 50:
            pi = 0.5 * (pi + P.T @ pi)
            pi /= pi.sum()
            res = _residual(P, pi)
            it += 1
        if res > tol:
            pi, res = _power(P, pi, tol, max_iter)
    elif method == "power":
        start = np.zeros(n)
        start[rec] = 1.0 / rec.size
        pi, res = _power(P, start, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    ss = SteadyState(chain.labels, pi, res, res <= tol)
    if not ss.converged:
        raise NoConvergence(f"residual {res:.3e} > tol {tol:.1e} after {max_iter} iterations", best=ss)
    return ss


def _direct(Q):
    m = Q.shape[0]
    if m == 1:
        return np.ones(1)
    Q = sp.csr_matrix(Q)
    # pin a heavily weighted state to 1 and drop its balance equation;
    # a dense normalisation row would wreck the LU fill-in
    guess = np.full(m, 1.0 / m)
    QT = Q.T.tocsr()
    for _ in range(20):
        guess = 0.5 * (guess + QT @ guess)
    a = int(np.argmax(guess))
    keep = np.flatnonzero(np.arange(m) != a)
    A = (QT - sp.identity(m, format="csr")).tocsc()
    rhs = -A[keep][:, [a]].toarray().ravel()
    x = np.empty(m)
    x[a] = 1.0
    x[keep] = spla.splu(A[keep][:, keep].tocsc()).solve(rhs)
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def _power(P, pi, tol, max_iter):
    PT = P.T.tocsr()
    res = _residual(P, pi)
    for _ in range(max_iter):
        if res <= tol:
            break
        pi = 0.5 * (pi + PT @ pi)
        pi /= pi.sum()
        res = _residual(P, pi)
    return pi, res


def probability_mass(ss: SteadyState, predicate) -> float:
    mask = np.fromiter((bool(predicate(lab)) for lab in ss.labels), dtype=bool, count=len(ss.labels))
    return float(np.sum(ss.distribution[mask]))
