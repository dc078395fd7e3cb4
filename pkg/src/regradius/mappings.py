"""Set-valued mapping models F: R^n =: R^m with image and inverse-distance oracles.

Four variants are supported: Linear (single-valued A x), Smooth (a finite
union of continuous branches), FiniteGraph (a stored point sample of the
graph) and Perturbed (base + scale * f for a single-valued f).  Each variant
supplies images(), distance_to_image() and inverse_distance(); graphs are
sampled deterministically on nested shells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .spaces import (
    DimensionMismatchError,
    NormSpec,
    ProductNormSpec,
    as_vector,
    generator,
    norm,
    pair_norm_primal,
)

#: residual below which a point counts as lying on a graph
ON_GRAPH_TOL = 1e-10


class GraphMembershipError(ValueError):
    """A point claimed to lie on a graph does not."""


class InverseOracleUnavailableError(RuntimeError):
    """The mapping variant has no exact inverse oracle for this query."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GraphPoint:
    """A point (x, y) with y in F(x)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(as_vector(self.x)))
        object.__setattr__(self, "y", _readonly(as_vector(self.y)))

    def same_as(self, other: "GraphPoint") -> bool:
        return np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)


@dataclass(frozen=True)
class SampledGraph:
    """Finite sample of a graph around a base point, within a pair-norm radius."""

    base: GraphPoint
    points: tuple[GraphPoint, ...]
    radius: float
    spaces: ProductNormSpec

    def __post_init__(self):
        if not any(p.same_as(self.base) for p in self.points):
            raise ValueError("base point must be contained in the sample")
        seen = set()
        slack = self.radius * (1.0 + 1e-9) + 1e-15
        for p in self.points:
            key = (p.x.tobytes(), p.y.tobytes())
            if key in seen:
                raise ValueError("sample contains exact duplicates")
            seen.add(key)
            d = pair_norm_primal(p.x - self.base.x, p.y - self.base.y, self.spaces)
            if d > slack:
                raise ValueError(f"sample point at pair-distance {d} exceeds radius {self.radius}")
        xs = np.array([p.x for p in self.points])
        ys = np.array([p.y for p in self.points])
        object.__setattr__(self, "_xs", _readonly(xs))
        object.__setattr__(self, "_ys", _readonly(ys))

    @property
    def xs(self) -> np.ndarray:
        return self._xs

    @property
    def ys(self) -> np.ndarray:
        return self._ys

    def pair_distances_to(self, at: GraphPoint) -> np.ndarray:
        dx = self._xs - at.x
        dy = self._ys - at.y
        p, r = self.spaces.left.p, self.spaces.right.p

        def _rows(m, e):
            if e == 1.0:
                return np.abs(m).sum(axis=1)
            if e == 2.0:
                return np.sqrt((m * m).sum(axis=1))
            return np.abs(m).max(axis=1)

        return _rows(dx, p) + _rows(dy, r)

    def index_of(self, at: GraphPoint) -> int:
        for i, p in enumerate(self.points):
            if p.same_as(at):
                return i
        raise ValueError("point is not part of this sample")


class MappingModel:
    """Base interface shared by every mapping variant."""

    #: whether inverse_distance certifies emptiness exactly (+inf is trustworthy)
    exact_inverse = True

    def __init__(self, domain: NormSpec, codomain: NormSpec):
        self.domain = domain
        self.codomain = codomain

    @property
    def product_spec(self) -> ProductNormSpec:
        return ProductNormSpec(self.domain, self.codomain)

    def images(self, x) -> list[np.ndarray]:
        raise NotImplementedError

    def distance_to_image(self, x, y) -> float:
        """d(y, F(x)); +inf when F(x) is empty."""
        y = as_vector(y)
        best = math.inf
        for w in self.images(x):
            d = norm(y - w, self.codomain)
            if d < best:
                best = d
        return best

    def inverse_distance(self, x, y) -> float:
        """d(x, F^{-1}(y)); +inf when the preimage is empty."""
        raise NotImplementedError

    def inverse_points(self, y) -> list[np.ndarray]:
        """Finite set of preimage candidates of y (exact where available)."""
        raise InverseOracleUnavailableError(type(self).__name__)


class LinearMapping(MappingModel):
    """Single-valued x -> A x."""

    def __init__(self, matrix, domain: NormSpec | None = None, codomain: NormSpec | None = None):
        A = np.atleast_2d(np.asarray(matrix, dtype=float))
        m, n = A.shape
        super().__init__(domain or NormSpec(n), codomain or NormSpec(m))
        if self.domain.dimension != n or self.codomain.dimension != m:
            raise DimensionMismatchError("matrix shape does not match the norm specs")
        self.matrix = _readonly(A)
        self._pinv = np.linalg.pinv(A)
        # orthonormal basis of ker A, empty for injective A
        _, s, vt = np.linalg.svd(A)
        rank = int(np.sum(s > s[0] * 1e-13)) if s.size and s[0] > 0 else 0
        self._null = vt[rank:].T

    def images(self, x) -> list[np.ndarray]:
        return [self.matrix @ as_vector(x)]

    def distance_to_image(self, x, y) -> float:
        return norm(as_vector(y) - self.matrix @ as_vector(x), self.codomain)

    def _particular_solution(self, y) -> np.ndarray | None:
        y = as_vector(y)
        u0 = self._pinv @ y
        if norm(self.matrix @ u0 - y, self.codomain) > 1e-9 * (1.0 + norm(y, self.codomain)):
            return None
        return u0

    def inverse_distance(self, x, y) -> float:
        x = as_vector(x)
        u0 = self._particular_solution(y)
        if u0 is None:
            return math.inf
        if self._null.shape[1] == 0:
            return norm(x - u0, self.domain)
        w = x - u0
        if self.domain.p == 2.0:
            return float(np.linalg.norm(w - self._null @ (self._null.T @ w)))
        return _min_pnorm_over_affine(w, self._null, self.domain)

    def inverse_points(self, y) -> list[np.ndarray]:
        u0 = self._particular_solution(y)
        return [] if u0 is None else [u0]


def _min_pnorm_over_affine(w: np.ndarray, basis: np.ndarray, spec: NormSpec) -> float:
    """min_z ||w - basis z||_p by iterated grid refinement (small null dimensions)."""
    d = basis.shape[1]
    center = basis.T @ w  # least-squares start
    width = float(np.linalg.norm(w)) + 1.0
    best = norm(w - basis @ center, spec)
    best_z = center
    for _ in range(8):
        axes = [np.linspace(c - width, c + width, 7) for c in center]
        grids = np.meshgrid(*axes, indexing="ij")
        zs = np.stack([g.ravel() for g in grids], axis=1)
        for z in zs:
            val = norm(w - basis @ z, spec)
            if val < best:
                best, best_z = val, z
        center = best_z
        width *= 0.35
        if d > 3:
            break
    return best


class SmoothMapping(MappingModel):
    """Finite union of continuous single-valued branches.

    Closedness of the graph near the base point is an unchecked assumption on
    user-supplied branches; branch inverses, when given, must return the full
    finite preimage set of their branch.
    """

    exact_inverse = True

    def __init__(
        self,
        branches: Sequence[Callable[[np.ndarray], np.ndarray]],
        domain: NormSpec,
        codomain: NormSpec,
        branch_inverses: Sequence[Callable[[np.ndarray], list[np.ndarray]] | None] | None = None,
        name: str = "smooth",
    ):
        super().__init__(domain, codomain)
        self.branches = tuple(branches)
        self.branch_inverses = tuple(branch_inverses) if branch_inverses else (None,) * len(self.branches)
        if len(self.branch_inverses) != len(self.branches):
            raise ValueError("one inverse slot per branch required")
        self.name = name

    def images(self, x) -> list[np.ndarray]:
        x = as_vector(x)
        return [as_vector(b(x)) for b in self.branches]

    def _preimages(self, y) -> list[np.ndarray]:
        y = as_vector(y)
        out: list[np.ndarray] = []
        scale = 1.0 + norm(y, self.codomain)
        for b, inv in zip(self.branches, self.branch_inverses):
            if inv is None:
                raise InverseOracleUnavailableError(
                    f"branch of {self.name!r} has no inverse; supply one or pre-sample a graph"
                )
            for u in inv(y):
                u = as_vector(u)
                if norm(as_vector(b(u)) - y, self.codomain) <= 1e-9 * scale:
                    out.append(u)
        return out

    def inverse_distance(self, x, y) -> float:
        x = as_vector(x)
        cands = self._preimages(y)
        if not cands:
            return math.inf
        return min(norm(x - u, self.domain) for u in cands)

    def inverse_points(self, y) -> list[np.ndarray]:
        return self._preimages(y)


class FiniteGraphMapping(MappingModel):
    """Mapping given by a stored graph sample; slices use a small membership band."""

    def __init__(self, graph: SampledGraph):
        super().__init__(graph.spaces.left, graph.spaces.right)
        self.graph = graph
        self.tol = 1e-9 * (1.0 + graph.radius)

    def images(self, x) -> list[np.ndarray]:
        x = as_vector(x)
        return [p.y.copy() for p in self.graph.points if norm(p.x - x, self.domain) <= self.tol]

    def inverse_distance(self, x, y) -> float:
        x, y = as_vector(x), as_vector(y)
        best = math.inf
        for p in self.graph.points:
            if norm(p.y - y, self.codomain) <= self.tol:
                best = min(best, norm(p.x - x, self.domain))
        return best

    def inverse_points(self, y) -> list[np.ndarray]:
        y = as_vector(y)
        return [p.x.copy() for p in self.graph.points if norm(p.y - y, self.codomain) <= self.tol]


class PerturbedMapping(MappingModel):
    """base + scale * f for a single-valued perturbation f with f(x_bar) = 0."""

    exact_inverse = False

    def __init__(self, base: MappingModel, f: Callable[[np.ndarray], np.ndarray], scale: float,
                 base_point: GraphPoint):
        super().__init__(base.domain, base.codomain)
        self.base = base
        self.f = f
        self.scale = float(scale)
        self.base_point = base_point

    def images(self, x) -> list[np.ndarray]:
        x = as_vector(x)
        shift = self.scale * as_vector(self.f(x))
        return [w + shift for w in self.base.images(x)]

    def distance_to_image(self, x, y) -> float:
        x = as_vector(x)
        shifted = as_vector(y) - self.scale * as_vector(self.f(x))
        return self.base.distance_to_image(x, shifted)

    def _fixed_point_roots(self, y, starts: list[np.ndarray], damping: float,
                           max_iter: int = 48) -> list[np.ndarray]:
        y = as_vector(y)
        roots = []
        tol = 1e-10 * (1.0 + norm(y, self.codomain))
        for u in starts:
            u = as_vector(u).copy()
            for _ in range(max_iter):
                target = y - self.scale * as_vector(self.f(u))
                cands = self.base.inverse_points(target)
                if not cands:
                    break
                nxt = min(cands, key=lambda c: norm(c - u, self.domain))
                step = damping * (nxt - u)
                u = u + step
                if norm(step, self.domain) <= 1e-15 * (1.0 + norm(u, self.domain)):
                    break
            if self.distance_to_image(u, y) <= tol:
                roots.append(u)
        return roots

    def _solve_preimages(self, y, anchors: Sequence[np.ndarray] = ()) -> list[np.ndarray]:
        y = as_vector(y)
        starts: list[np.ndarray] = [as_vector(a) for a in anchors]
        try:
            starts.extend(self.base.inverse_points(y))
        except InverseOracleUnavailableError:
            pass
        if not starts:
            return []
        roots = self._fixed_point_roots(y, starts, damping=1.0)
        if not roots:
            roots = self._fixed_point_roots(y, starts, damping=0.5, max_iter=120)
        # dedupe nearby roots
        out: list[np.ndarray] = []
        for r in roots:
            if all(norm(r - o, self.domain) > 1e-12 * (1.0 + norm(r, self.domain)) for o in out):
                out.append(r)
        return out

    def inverse_distance(self, x, y, anchors: Sequence[np.ndarray] = ()) -> float:
        """Distance to the preimage via verified multistart roots.

        +inf means "no root found", not certified emptiness; callers must
        treat it accordingly (exact_inverse is False).
        """
        x = as_vector(x)
        y = as_vector(y)
        best = math.inf
        tol = 1e-10 * (1.0 + norm(y, self.codomain))
        for a in anchors:
            a = as_vector(a)
            if self.distance_to_image(a, y) <= tol:
                best = min(best, norm(a - x, self.domain))
        for r in self._solve_preimages(y, anchors=anchors):
            best = min(best, norm(r - x, self.domain))
        return best

    def inverse_points(self, y) -> list[np.ndarray]:
        return self._solve_preimages(y)


def add_perturbation(F: MappingModel, f: Callable[[np.ndarray], np.ndarray], scale: float,
                     base_point: GraphPoint) -> PerturbedMapping:
    """Form F + scale * f; requires f(x_bar) = 0 so the base point is preserved."""
    fx = as_vector(f(base_point.x))
    if norm(fx, F.codomain) > 1e-10:
        raise GraphMembershipError(
            f"perturbation must vanish at the base point, got ||f(x_bar)|| = {norm(fx, F.codomain):.3e}"
        )
    return PerturbedMapping(F, f, scale, base_point)


def sample_graph(F: MappingModel, center: GraphPoint, radius: float, budget: int,
                 seed: int = 0) -> SampledGraph:
    """Deterministic graph sample on nested shells around the center.

    Domain points are drawn on shells of radii radius * 2^-j (antipodal pairs
    plus the signed coordinate directions), each paired with every image value
    that keeps the pair within the pair-norm ball.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if F.distance_to_image(center.x, center.y) > ON_GRAPH_TOL:
        raise GraphMembershipError("center is not on the graph")
    spec = F.product_spec
    if isinstance(F, FiniteGraphMapping):
        # a stored graph is its own sample: restrict to the requested ball
        pts = [center]
        seen0 = {(center.x.tobytes(), center.y.tobytes())}
        for p in F.graph.points:
            key = (p.x.tobytes(), p.y.tobytes())
            if key in seen0:
                continue
            if pair_norm_primal(p.x - center.x, p.y - center.y, spec) <= radius:
                seen0.add(key)
                pts.append(p)
        return SampledGraph(center, tuple(pts), radius, spec)
    rng = generator(seed, 0x9A11)
    n = F.domain.dimension
    n_shells = 7
    per_shell = max(1, budget // (2 * n_shells))
    offsets: list[np.ndarray] = []
    for j in range(n_shells):
        r = radius * (2.0 ** -j)
        for i in range(n):
            e = np.zeros(n)
            e[i] = r
            offsets.append(e.copy())
            offsets.append(-e)
        # random radii inside the shell band keep one-dimensional domains
        # from collapsing onto the dyadic radii alone
        vs = rng.standard_normal((per_shell, n))
        radii = r * (0.5 + 0.5 * rng.random(per_shell))
        for v, rv in zip(vs, radii):
            nv = norm(v, F.domain)
            if nv < 1e-12:
                continue
            step = v / nv * rv
            offsets.append(step)
            offsets.append(-step)

    points: list[GraphPoint] = [center]
    seen = {(center.x.tobytes(), center.y.tobytes())}

    def keep(x: np.ndarray) -> None:
        for w in F.images(x):
            if pair_norm_primal(x - center.x, w - center.y, spec) > radius:
                continue
            key = (x.tobytes(), w.tobytes())
            if key in seen:
                continue
            seen.add(key)
            points.append(GraphPoint(x, w))

    for off in offsets:
        keep(center.x + off)
    # top up to the requested budget (the pair-ball filter can drop whole
    # outer bands when the mapping stretches the range side)
    for _ in range(4 * budget):
        if len(points) > budget:
            break
        v = rng.standard_normal(n)
        nv = norm(v, F.domain)
        if nv < 1e-12:
            continue
        rv = radius * 2.0 ** (-float(rng.uniform(0.0, n_shells)))
        keep(center.x + v / nv * rv)
    return SampledGraph(center, tuple(points), radius, spec)


# ---------------------------------------------------------------------------
# JSON loading of mapping specifications
# ---------------------------------------------------------------------------

def _builtin_identity(domain: NormSpec, codomain: NormSpec) -> SmoothMapping:
    return SmoothMapping(
        branches=(lambda x: x,),
        domain=domain,
        codomain=codomain,
        branch_inverses=(lambda y: [y],),
        name="identity",
    )


def _builtin_abs_branches(domain: NormSpec, codomain: NormSpec) -> SmoothMapping:
    return SmoothMapping(
        branches=(lambda x: x, lambda x: -x),
        domain=domain,
        codomain=codomain,
        branch_inverses=(lambda y: [y], lambda y: [-y]),
        name="abs-branches",
    )


def _parabola_inverse(y: np.ndarray) -> list[np.ndarray]:
    v = float(y[0])
    if v < 0.0:
        return []
    r = math.sqrt(v)
    return [np.array([r]), np.array([-r])] if r > 0.0 else [np.array([0.0])]


def _builtin_parabola(domain: NormSpec, codomain: NormSpec) -> SmoothMapping:
    if domain.dimension != 1 or codomain.dimension != 1:
        raise ValueError("parabola builtin is one-dimensional")
    return SmoothMapping(
        branches=(lambda x: x * x,),
        domain=domain,
        codomain=codomain,
        branch_inverses=(_parabola_inverse,),
        name="parabola",
    )


BUILTIN_SMOOTH = {
    "identity": _builtin_identity,
    "abs-branches": _builtin_abs_branches,
    "parabola": _builtin_parabola,
}


def load_mapping(doc: dict, domain: NormSpec, codomain: NormSpec) -> MappingModel:
    """Build a MappingModel from its JSON document."""
    kind = doc.get("kind")
    if kind == "linear":
        return LinearMapping(doc["matrix"], domain, codomain)
    if kind == "smooth-builtin":
        name = doc.get("builtin")
        if name not in BUILTIN_SMOOTH:
            raise ValueError(f"unknown builtin mapping {name!r}")
        return BUILTIN_SMOOTH[name](domain, codomain)
    if kind == "graph":
        pts = [GraphPoint(p["x"], p["y"]) for p in doc["points"]]
        base = GraphPoint(doc["base"]["x"], doc["base"]["y"])
        radius = float(doc["radius"])
        graph = SampledGraph(base, tuple(pts), radius, ProductNormSpec(domain, codomain))
        return FiniteGraphMapping(graph)
    if kind == "perturbed":
        base_map = load_mapping(doc["base"], domain, codomain)
        base_pt = GraphPoint(doc["base_point"]["x"], doc["base_point"]["y"])
        f = load_perturbation_function(doc["f"], domain, codomain)
        return add_perturbation(base_map, f, float(doc.get("scale", 1.0)), base_pt)
    raise ValueError(f"unknown mapping kind {kind!r}")


def load_perturbation_function(doc: dict, domain: NormSpec, codomain: NormSpec):
    """Perturbation function specs used by configs: zero, linear, or sine."""
    kind = doc.get("kind")
    if kind == "zero":
        m = codomain.dimension
        return lambda x: np.zeros(m)
    if kind == "linear":
        C = np.atleast_2d(np.asarray(doc["matrix"], dtype=float))
        if C.shape != (codomain.dimension, domain.dimension):
            raise DimensionMismatchError("perturbation matrix shape mismatch")
        return lambda x: C @ as_vector(x)
    if kind == "sine":
        a = float(doc["amplitude"])
        w = float(doc["frequency"])
        if domain.dimension != codomain.dimension:
            raise DimensionMismatchError("sine perturbation needs equal dimensions")
        return lambda x: a * np.sin(w * as_vector(x))
    raise ValueError(f"unknown perturbation kind {kind!r}")
