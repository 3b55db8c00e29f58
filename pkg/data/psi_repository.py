"""Characteristic exponent ψ by quadrature, and a cache of Chebyshev tables of it.

ψ(x) = iax + ∫(e^{ix log(1-u)} - 1 + ixu) u^{-2} Λ(du)

The absolutely continuous part is integrated in w = -log(1-u): a power
series below u = δ, geometric Gauss-Legendre panels up to w = 1 and uniform
panels, narrow enough to follow e^{-ixw}, beyond. Two Gauss orders on the
same panels give the error estimate. Atoms are added in closed form.
"""
import functools
import logging
import threading
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import chebyshev, legendre
from scipy import special

from core.exceptions import QuadratureError, UnsupportedRepresentationError
from core.models import LimitParams
from core.specfun import binom_poly_coefficients
from data import config
from data.measures import (atoms, beta_components, breakpoints, density, exponent_at_one, exponent_at_zero,
                           is_beta_family, measure_key, off_endpoints, quad_segment)

logger = logging.getLogger(__name__)

GAUSS_ORDERS = (16, 24)
SERIES_ORDER = 18
X_CHUNK = 64
TAIL_DECAY = 36.0
MAX_TAIL = 4000.0
CHEB_DEGREE = 32
MAX_SPLIT_DEPTH = 8


@functools.lru_cache(maxsize=None)
def gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    return legendre.leggauss(order)


def panel_rule(edges: np.ndarray, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on consecutive panels."""
    nodes, weights = gauss_legendre(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = (hi - lo) / 2.0
    return (lo + half * (nodes + 1.0)).ravel(), (half * weights).ravel()


def _head_split(x_max: float) -> float:
    # δ|x| ≤ 0.1 keeps the series terms geometric
    steps = max(0, int(np.ceil(np.log2(max(x_max, 1.0) / 100.0))))
    return 1e-3 / 2.0 ** steps


def _panel_width(x_max: float) -> float:
    steps = max(0, int(np.ceil(np.log2(max(x_max, 1.0) / 4.0))))
    return 1.0 / 2.0 ** steps


class _Layout:
    """Quadrature nodes in w for one measure, head split and panel width."""

    def __init__(self, measure, delta: float, width: float):
        q = exponent_at_one(measure)
        q_eff = 0.0 if q is None else q
        if q_eff <= -1.0:
            raise UnsupportedRepresentationError(
                "ψ by quadrature needs a density like (1-u)^q with q > -1 near 1.")
        tail_end = 1.0 + TAIL_DECAY / (q_eff + 1.0)
        if tail_end > MAX_TAIL:
            raise UnsupportedRepresentationError(f"The density decays too slowly near 1 (q = {q_eff}).")
        w_delta = -np.log1p(-delta)
        geometric = w_delta * 2.0 ** np.arange(0, int(np.ceil(np.log2(1.0 / w_delta))) + 1)
        edges = np.concatenate([geometric[geometric < 1.0], np.arange(1.0, tail_end + width, width)])
        cuts = [-np.log1p(-p) for p in breakpoints(measure)]
        edges = np.unique(np.concatenate([edges, [c for c in cuts if w_delta < c < edges[-1]]]))
        # split geometric panels wider than the oscillation width
        refined = [edges[0]]
        for lo, hi in zip(edges[:-1], edges[1:]):
            pieces = max(1, int(np.ceil((hi - lo) / width)))
            refined.extend(np.linspace(lo, hi, pieces + 1)[1:])
        edges = np.asarray(refined)
        self.delta = delta
        self.rules = []
        for order in GAUSS_ORDERS:
            w, weights = panel_rule(edges, order)
            u = -np.expm1(-w)
            v = np.exp(-w)
            h = weights * density(measure, u, v) * v / (u * u)
            self.rules.append((w, u, h, float(np.dot(h, u))))
        self.head_moments = _head_moments(measure, delta)


def _head_moments(measure, delta: float) -> np.ndarray:
    """M_j = ∫_0^δ u^j Λ_ac(du) for j = 0..SERIES_ORDER-2."""
    j = np.arange(SERIES_ORDER - 1, dtype=float)
    if is_beta_family(measure):
        moments = np.zeros(j.shape)
        for weight, a, b in beta_components(measure):
            moments += weight * np.exp(special.betaln(a + j, b) - special.betaln(a, b)) * special.betainc(a + j, b, delta)
        return moments
    p = exponent_at_zero(measure)
    alpha = 0.0 if p is None else p

    def g(u, jj):
        u = off_endpoints(u, 0.0, delta, alpha, 0.0)
        return u ** jj * float(density(measure, u)) / u ** alpha

    return np.array([quad_segment(lambda u, jj=jj: g(u, jj), 0.0, delta, 1e-12, True, alpha=alpha) for jj in j])


class PsiQuadrature:
    """ψ for one LimitParams, with layouts cached by (δ, panel width)."""

    def __init__(self, params: LimitParams, tol: Optional[float] = None):
        self.params = params
        self.tol = config['quad_tol'] if tol is None else tol
        self._layouts: Dict[Tuple[float, float], _Layout] = {}
        self._lock = threading.Lock()
        self.atoms = atoms(params.measure)

    def _layout(self, x_max: float) -> _Layout:
        key = (_head_split(x_max), _panel_width(x_max))
        with self._lock:
            layout = self._layouts.get(key)
        if layout is None:
            layout = _Layout(self.params.measure, *key)
            with self._lock:
                self._layouts[key] = layout
        return layout

    def __call__(self, x) -> np.ndarray:
        x_arr = np.asarray(x, dtype=float)
        flat = np.abs(x_arr.ravel())
        values = np.empty(flat.size, dtype=complex)
        order = np.argsort(flat)
        for start in range(0, flat.size, X_CHUNK):
            index = order[start:start + X_CHUNK]
            values[index] = self._positive(flat[index])
        values = np.where(x_arr.ravel() < 0.0, np.conj(values), values)
        values[flat == 0.0] = 0.0
        return values.reshape(x_arr.shape)

    def _positive(self, xs: np.ndarray) -> np.ndarray:
        layout = self._layout(float(xs.max()))
        ix = 1j * xs
        head = np.tensordot(layout.head_moments, binom_poly_coefficients(ix, SERIES_ORDER), axes=(0, 0))
        estimates = []
        for w, u, h, h_u in layout.rules:
            phase = np.outer(xs, w)
            real = -2.0 * np.sin(phase / 2.0) ** 2 @ h
            imag = xs * h_u - np.sin(phase) @ h
            estimates.append(real + 1j * imag)
        error = np.abs(estimates[1] - estimates[0])
        body = estimates[-1]
        values = head + body
        scale = np.maximum(1.0, np.abs(values))
        if np.any(error > self.tol * scale):
            worst = int(np.argmax(error / scale))
            raise QuadratureError(f"ψ({xs[worst]:.4g}) quadrature error {error[worst]:.3g} exceeds {self.tol:.3g}.")
        for location, mass in self.atoms:
            theta = xs * np.log1p(-location)
            kick = -2.0 * np.sin(theta / 2.0) ** 2 + 1j * (np.sin(theta) + xs * location)
            values = values + mass / location ** 2 * kick
        return values + 1j * self.params.a * xs


class ChebyshevTable:
    """Piecewise Chebyshev interpolant of a complex function on [0, ∞), built lazily on unit cells."""

    def __init__(self, evaluate, tol: float, degree: int = CHEB_DEGREE):
        self.evaluate = evaluate
        self.tol = tol
        self.degree = degree
        self._cells: Dict[int, List[Tuple[float, float, np.ndarray]]] = {}
        self._lock = threading.Lock()
        self._nodes = chebyshev.chebpts1(degree + 1)

    def __call__(self, v) -> np.ndarray:
        v_arr = np.asarray(v, dtype=float)
        flat = v_arr.ravel()
        values = np.empty(flat.size, dtype=complex)
        cells = np.floor(flat).astype(np.int64)
        for cell in np.unique(cells):
            mask = cells == cell
            values[mask] = self._evaluate_cell(int(cell), flat[mask])
        return values.reshape(v_arr.shape)

    def _evaluate_cell(self, cell: int, v: np.ndarray) -> np.ndarray:
        with self._lock:
            panels = self._cells.get(cell)
        if panels is None:
            panels = self._fit(float(cell), float(cell + 1), 0)
            with self._lock:
                self._cells[cell] = panels
        out = np.empty(v.size, dtype=complex)
        for lo, hi, coef in panels:
            mask = (v >= lo) & (v <= hi)
            out[mask] = chebyshev.chebval((2.0 * v[mask] - lo - hi) / (hi - lo), coef)
        return out

    def _fit(self, lo: float, hi: float, depth: int) -> List[Tuple[float, float, np.ndarray]]:
        x = lo + (hi - lo) * (self._nodes + 1.0) / 2.0
        values = self.evaluate(x)
        coef = (chebyshev.chebfit(self._nodes, values.real, self.degree)
                + 1j * chebyshev.chebfit(self._nodes, values.imag, self.degree))
        tail = float(np.max(np.abs(coef[-4:])))
        scale = max(1.0, float(np.max(np.abs(values))))
        if tail <= self.tol * scale:
            return [(lo, hi, coef)]
        if depth >= MAX_SPLIT_DEPTH:
            logger.warning("Chebyshev panel [%.6g, %.6g] stopped at tail %.3g", lo, hi, tail)
            return [(lo, hi, coef)]
        mid = (lo + hi) / 2.0
        return self._fit(lo, mid, depth + 1) + self._fit(mid, hi, depth + 1)


class PsiRepositoryInterface:

    def psi(self, x, params: LimitParams) -> np.ndarray:
        # ψ by direct quadrature
        pass

    def psi_table(self, x, params: LimitParams) -> np.ndarray:
        # ψ from the cached interpolant
        pass


class TabulatedPsiRepository(PsiRepositoryInterface):
    """Keeps one quadrature and one Chebyshev table per LimitParams."""

    def __init__(self, tol: Optional[float] = None, table_tol: float = 1e-12):
        self.tol = tol
        self.table_tol = table_tol
        self._quadratures: Dict[str, PsiQuadrature] = {}
        self._tables: Dict[str, ChebyshevTable] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _key(params: LimitParams) -> str:
        return f"{measure_key(params.measure)}|{params.b!r}|{params.a!r}"

    def _quadrature(self, params: LimitParams) -> PsiQuadrature:
        key = self._key(params)
        with self._lock:
            if key not in self._quadratures:
                self._quadratures[key] = PsiQuadrature(params, self.tol)
            return self._quadratures[key]

    def psi(self, x, params: LimitParams) -> np.ndarray:
        return self._quadrature(params)(x)

    def psi_table(self, x, params: LimitParams) -> np.ndarray:
        key = self._key(params)
        quadrature = self._quadrature(params)
        with self._lock:
            if key not in self._tables:
                self._tables[key] = ChebyshevTable(quadrature, self.table_tol)
            table = self._tables[key]
        x_arr = np.asarray(x, dtype=float)
        values = table(np.abs(x_arr))
        return np.where(x_arr < 0.0, np.conj(values), values)
