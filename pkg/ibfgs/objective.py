"""The transductive SVM objective family.

F(w, b) = 1/2 ||w||^2 + C1 sum_labeled max{0, 1 - y_i (w^T x_i + b)}
                      + C2 sum_unlabeled max{0, 1 - |w^T x_i + b|}

together with its DC split, its smoothing F^S, the locally convexified F^C and the
distributed strongly convex F^SC. Points are flat vectors omega = (w, b) or ModelPoints.

Two component partitions are used. ``views()`` has m = p + q + 1 components with the
regularizer first; ``distributed_views()`` has m = p + q components and spreads the
regularizer over them (F^SC only). Component values carry their C1/C2 weight, so the
components of a partition sum to the whole objective.
"""
from typing import Optional, Union

import numpy as np

from . import smoothing
from .errors import RhoTooSmallError, UnsupportedFlavorError
from .finite_sum import FiniteSum
from .models import (
    ComponentKind, ComponentView, Dataset, ModelPoint, ObjectiveConfig, SmoothingFlavor, TieRule, Variant,
)

Point = Union[ModelPoint, np.ndarray]


def _select_plus(r: float, tie_rule: TieRule) -> float:
    """An element of the subdifferential of max{0, .} at r."""
    if r > 0.0:
        return 1.0
    if r < 0.0 or tie_rule != TieRule.RIGHT:
        return 0.0
    return 1.0


def _select_abs(t: float, tie_rule: TieRule) -> float:
    """An element of the subdifferential of |.| at t."""
    if t != 0.0:
        return 1.0 if t > 0.0 else -1.0
    return {TieRule.ZERO_SIDE: 0.0, TieRule.LEFT: -1.0, TieRule.RIGHT: 1.0}[tie_rule]


class TSVMObjective:

    def __init__(self, cfg: ObjectiveConfig, data: Dataset):
        self._cfg = cfg
        self._data = data
        self._X = np.asarray(data.features, dtype=float)
        self._y = np.asarray(data.labels, dtype=float)
        self._p = data.p
        self._q = data.q
        self._row_norms2 = np.einsum('ij,ij->i', self._X, self._X)
        # Per-component shares of 1/2 ||w||^2 in the distributed partition.
        if self._p and self._q:
            self._labeled_share, self._unlabeled_share = 1.0 / (4 * self._p), 1.0 / (4 * self._q)
        else:
            self._labeled_share = 1.0 / (2 * self._p) if self._p else 0.0
            self._unlabeled_share = 1.0 / (2 * self._q) if self._q else 0.0

    @property
    def cfg(self) -> ObjectiveConfig:
        return self._cfg

    @property
    def data(self) -> Dataset:
        return self._data

    @property
    def dim(self) -> int:
        return self._X.shape[1] + 1

    def views(self) -> list[ComponentView]:
        views = [ComponentView(index=0, kind=ComponentKind.REGULARIZER)]
        for row in range(self._p + self._q):
            kind = ComponentKind.LABELED_HINGE if row < self._p else ComponentKind.UNLABELED_HAT
            views.append(ComponentView(index=row + 1, kind=kind, row=row))
        return views

    def distributed_views(self) -> list[ComponentView]:
        return [
            ComponentView(
                index=row, row=row,
                kind=ComponentKind.LABELED_HINGE if row < self._p else ComponentKind.UNLABELED_HAT)
            for row in range(self._p + self._q)
        ]

    def _vector(self, point: Point) -> np.ndarray:
        omega = point.to_vector() if isinstance(point, ModelPoint) else np.asarray(point, dtype=float)
        if omega.shape != (self.dim,):
            raise ValueError(f'expected a point of length {self.dim}, got shape {omega.shape}')
        return omega

    def _row(self, view: ComponentView) -> tuple[np.ndarray, np.ndarray]:
        """The sample of a view and its augmented form a = (x; 1)."""
        if view.row is None or not 0 <= view.row < self._p + self._q:
            raise ValueError(f'view {view} does not reference a sample row')
        x = self._X[view.row]
        return x, np.append(x, 1.0)

    def _label(self, view: ComponentView) -> float:
        if view.row >= self._p:
            raise ValueError(f'row {view.row} is unlabeled')
        return self._y[view.row]

    def margins(self, point: Point) -> np.ndarray:
        omega = self._vector(point)
        return self._X @ omega[:-1] + omega[-1]

    def eval_F(self, point: Point) -> float:
        omega = self._vector(point)
        w = omega[:-1]
        t = self._X @ w + omega[-1]
        hinge = np.maximum(0.0, 1.0 - self._y * t[:self._p]).sum()
        hat = np.maximum(0.0, 1.0 - np.abs(t[self._p:])).sum()
        return float(0.5 * w @ w + self._cfg.C1 * hinge + self._cfg.C2 * hat)

    def eval_FS(self, point: Point, mu) -> float:
        """The smoothed objective; ``mu`` is a scalar or one value per sample row."""
        omega = self._vector(point)
        w = omega[:-1]
        t = self._X @ w + omega[-1]
        mu = np.broadcast_to(np.asarray(mu, dtype=float), t.shape)
        flavor = self._cfg.smoothing_flavor
        p = self._p
        hinge = smoothing.phi(1.0 - self._y * t[:p], mu[:p], flavor).sum()
        inner = 1.0 - smoothing.psi(t[p:], mu[p:], flavor)
        hat = smoothing.phi(inner, mu[p:], flavor).sum()
        return float(0.5 * w @ w + self._cfg.C1 * hinge + self._cfg.C2 * hat)

    def component_value(self, view: ComponentView, point: Point) -> float:
        omega = self._vector(point)
        if view.kind == ComponentKind.REGULARIZER:
            w = omega[:-1]
            return float(0.5 * w @ w)
        _, a = self._row(view)
        t = float(a @ omega)
        if view.kind == ComponentKind.LABELED_HINGE:
            return self._cfg.C1 * max(0.0, 1.0 - self._label(view) * t)
        return self._cfg.C2 * max(0.0, 1.0 - abs(t))

    def generalized_gradient(
            self, view: ComponentView, point: Point, tie_rule: TieRule = TieRule.ZERO_SIDE) -> np.ndarray:
        omega = self._vector(point)
        if view.kind == ComponentKind.REGULARIZER:
            grad = omega.copy()
            grad[-1] = 0.0
            return grad
        _, a = self._row(view)
        t = float(a @ omega)
        if view.kind == ComponentKind.LABELED_HINGE:
            y = self._label(view)
            return -self._cfg.C1 * _select_plus(1.0 - y * t, tie_rule) * y * a
        slope = _select_plus(1.0 - abs(t), tie_rule) * _select_abs(t, tie_rule)
        return -self._cfg.C2 * slope * a

    def dc_split_value(self, view: ComponentView, point: Point) -> tuple[float, float]:
        """(g, h) with g - h equal to the component; h is zero for the convex components."""
        if view.kind != ComponentKind.UNLABELED_HAT:
            return self.component_value(view, point), 0.0
        _, a = self._row(view)
        t = abs(float(a @ self._vector(point)))
        c2 = self._cfg.C2
        return c2 * max(0.0, t - 1.0), c2 * (t - 1.0)

    def dc_subgradients(
            self, view: ComponentView, point: Point,
            tie_rule: TieRule = TieRule.ZERO_SIDE) -> tuple[np.ndarray, np.ndarray]:
        omega = self._vector(point)
        if view.kind != ComponentKind.UNLABELED_HAT:
            return self.generalized_gradient(view, omega, tie_rule), np.zeros(self.dim)
        _, a = self._row(view)
        t = float(a @ omega)
        sign = _select_abs(t, tie_rule)
        c2 = self._cfg.C2
        return c2 * _select_plus(abs(t) - 1.0, tie_rule) * sign * a, c2 * sign * a

    def _smoothed(self, view: ComponentView, omega: np.ndarray, mu: float) -> tuple[float, np.ndarray]:
        if mu <= 0.0:
            raise ValueError(f'smoothing parameter must be positive, got {mu}')
        if view.kind == ComponentKind.REGULARIZER:
            w = omega[:-1]
            grad = omega.copy()
            grad[-1] = 0.0
            return float(0.5 * w @ w), grad
        flavor = self._cfg.smoothing_flavor
        _, a = self._row(view)
        t = float(a @ omega)
        if view.kind == ComponentKind.LABELED_HINGE:
            y = self._label(view)
            r = 1.0 - y * t
            c1 = self._cfg.C1
            return c1 * float(smoothing.phi(r, mu, flavor)), -c1 * float(smoothing.phi_prime(r, mu, flavor)) * y * a
        r = 1.0 - float(smoothing.psi(t, mu, flavor))
        slope = float(smoothing.phi_prime(r, mu, flavor)) * float(smoothing.psi_prime(t, mu, flavor))
        c2 = self._cfg.C2
        return c2 * float(smoothing.phi(r, mu, flavor)), -c2 * slope * a

    def eval_FS_component(self, view: ComponentView, point: Point, mu: float) -> float:
        return self._smoothed(view, self._vector(point), mu)[0]

    def grad_FS_component(self, view: ComponentView, point: Point, mu: float) -> np.ndarray:
        return self._smoothed(view, self._vector(point), mu)[1]

    def rho_lower_bound(self, view: ComponentView, mu: float) -> float:
        """Smallest rho for which the smoothed hat term plus (rho/2)||. - base||^2 is convex."""
        if view.kind != ComponentKind.UNLABELED_HAT:
            raise ValueError(f'only unlabeled components are convexified, got {view.kind.value}')
        if self._cfg.smoothing_flavor != SmoothingFlavor.PIECEWISE:
            raise UnsupportedFlavorError(
                f'no curvature bound is available for the {self._cfg.smoothing_flavor.value} smoothing')
        if mu <= 0.0:
            raise ValueError(f'smoothing parameter must be positive, got {mu}')
        self._row(view)
        return 2.0 * (self._row_norms2[view.row] + 1.0) / mu

    def _check_rho(self, view: ComponentView, mu: float, rho: Optional[float]) -> float:
        bound = self.rho_lower_bound(view, mu)
        if rho is None or rho < bound:
            raise RhoTooSmallError(f'rho={rho} is below the convexity bound {bound:.6g} for row {view.row}')
        return rho

    def _convexified(
            self, view: ComponentView, point: Point, mu: float, base: Point,
            rho: Optional[float]) -> tuple[float, np.ndarray]:
        omega = self._vector(point)
        value, grad = self._smoothed(view, omega, mu)
        if view.kind == ComponentKind.UNLABELED_HAT:
            rho = self._check_rho(view, mu, rho)
            d = omega - self._vector(base)
            c2 = self._cfg.C2
            value += c2 * 0.5 * rho * float(d @ d)
            grad = grad + c2 * rho * d
        return value, grad

    def eval_FC_component(
            self, view: ComponentView, point: Point, mu: float, base: Point, rho: Optional[float]) -> float:
        return self._convexified(view, point, mu, base, rho)[0]

    def grad_FC_component(
            self, view: ComponentView, point: Point, mu: float, base: Point, rho: Optional[float]) -> np.ndarray:
        return self._convexified(view, point, mu, base, rho)[1]

    def _strongly_convex(
            self, view: ComponentView, point: Point, mu: float, base: Point,
            rho: Optional[float]) -> tuple[float, np.ndarray]:
        if view.kind == ComponentKind.REGULARIZER:
            raise ValueError('the distributed partition has no regularizer component')
        omega = self._vector(point)
        base = self._vector(base)
        w = omega[:-1]
        value, grad = self._convexified(view, omega, mu, base, rho)
        share = self._labeled_share if view.kind == ComponentKind.LABELED_HINGE else self._unlabeled_share
        value += share * float(w @ w)
        grad = grad.copy()
        grad[:-1] += 2.0 * share * w
        if view.kind == ComponentKind.LABELED_HINGE:
            db = omega[-1] - base[-1]
            coupling = self._cfg.beta / self._p
            value += 0.5 * coupling * db * db
            grad[-1] += coupling * db
        return value, grad

    def eval_FSC_component(
            self, view: ComponentView, point: Point, mu: float, base: Point, rho: Optional[float] = None) -> float:
        return self._strongly_convex(view, point, mu, base, rho)[0]

    def grad_FSC_component(
            self, view: ComponentView, point: Point, mu: float, base: Point,
            rho: Optional[float] = None) -> np.ndarray:
        return self._strongly_convex(view, point, mu, base, rho)[1]

    def sc_modulus(self, view: ComponentView, mu: float, rho: Optional[float] = None) -> float:
        """A strong convexity modulus of an F^SC component."""
        if view.kind == ComponentKind.LABELED_HINGE:
            return min(2.0 * self._labeled_share, self._cfg.beta / self._p)
        if view.kind == ComponentKind.UNLABELED_HAT:
            return self._cfg.C2 * (self._check_rho(view, mu, rho) - self.rho_lower_bound(view, mu))
        raise ValueError('the distributed partition has no regularizer component')


class TSVMFiniteSum(FiniteSum):
    """Exposes one formulation of a TSVMObjective to the incremental solvers."""

    def __init__(
            self, objective: TSVMObjective, variant: Variant, tie_rule: TieRule = TieRule.ZERO_SIDE,
            rho_factor: float = 2.0, sc_rho_factor: float = 1.1):
        self._objective = objective
        self._variant = variant
        self._tie_rule = tie_rule
        self._rho_factor = sc_rho_factor if variant == Variant.STRONGLY_CONVEX else rho_factor
        if variant == Variant.STRONGLY_CONVEX:
            self._views = objective.distributed_views()
        else:
            self._views = objective.views()
        self._with_rows = np.array([v.index for v in self._views if v.row is not None], dtype=int)
        self._rows = np.array([v.row for v in self._views if v.row is not None], dtype=int)

    @property
    def objective(self) -> TSVMObjective:
        return self._objective

    @property
    def variant(self) -> Variant:
        return self._variant

    @property
    def num_components(self) -> int:
        return len(self._views)

    @property
    def dim(self) -> int:
        return self._objective.dim

    def view(self, index: int) -> ComponentView:
        return self._views[index]

    def row_mu(self, mu: np.ndarray) -> np.ndarray:
        """Per-row smoothing parameters from per-component ones."""
        row_mu = np.empty(self._rows.shape[0])
        row_mu[self._rows] = np.asarray(mu, dtype=float)[self._with_rows]
        return row_mu

    def value(self, omega: np.ndarray, mu: Optional[np.ndarray] = None) -> float:
        if not self._variant.smoothed:
            return self._objective.eval_F(omega)
        if mu is None:
            raise ValueError(f'the {self._variant.value} formulation needs smoothing parameters')
        return self._objective.eval_FS(omega, self.row_mu(mu))

    def true_value(self, omega: np.ndarray) -> float:
        return self._objective.eval_F(omega)

    def rho(self, index: int, mu: float) -> float:
        return self._rho_factor * self._objective.rho_lower_bound(self._views[index], mu)

    def gradient(self, index: int, omega: np.ndarray, mu: Optional[float] = None) -> np.ndarray:
        view = self._views[index]
        if not self._variant.smoothed:
            return self._objective.generalized_gradient(view, omega, self._tie_rule)
        if self._variant == Variant.STRONGLY_CONVEX:
            # Anchored at omega itself: the rho and beta quadratics contribute no gradient.
            rho = self.rho(index, mu) if view.kind == ComponentKind.UNLABELED_HAT else None
            return self._objective.grad_FSC_component(view, omega, mu, omega, rho)
        return self._objective.grad_FS_component(view, omega, mu)

    def is_nonconvex(self, index: int) -> bool:
        return self._views[index].kind == ComponentKind.UNLABELED_HAT

    def dc_subgradients(self, index: int, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self._objective.dc_subgradients(self._views[index], omega, self._tie_rule)

    def anchor_curvature(self, index: int, mu: Optional[float] = None) -> Optional[np.ndarray]:
        view = self._views[index]
        if self._variant not in (Variant.CONVEXIFIED, Variant.STRONGLY_CONVEX):
            return None
        if view.kind == ComponentKind.UNLABELED_HAT:
            return np.full(self.dim, self._objective.cfg.C2 * self.rho(index, mu))
        if self._variant == Variant.STRONGLY_CONVEX and view.kind == ComponentKind.LABELED_HINGE:
            curvature = np.zeros(self.dim)
            curvature[-1] = self._objective.cfg.beta / self._objective.data.p
            return curvature
        return None
