import logging
import math

import numpy as np
from munch import Munch

from driftlab import defaults, exceptions
from driftlab.expressions import Number, add, sub, mul, div, derivative, evaluate, profile

logger = logging.getLogger(__name__)

RIC_PHI = "ric_phi"
RIC_PHI_M = "ric_phi_m"

_FLAVORS = {
    "ric_phi": RIC_PHI,
    "ric_φ": RIC_PHI,
    "ric_phi_m": RIC_PHI_M,
    "ric_phi^m": RIC_PHI_M,
    "ric_φ^m": RIC_PHI_M,
}


def parse_m(value):
    """Read a synthetic dimension: an integer, or inf/∞/None for the infinite case"""
    if value is None:
        return math.inf
    if isinstance(value, str):
        v = value.strip().lower()
        if v in ("inf", "infinity", "∞", "oo"):
            return math.inf
        value = float(v)
    if math.isinf(value):
        return math.inf
    return float(value)


def format_m(m):
    return "inf" if math.isinf(m) else (int(m) if float(m).is_integer() else m)


def curvature_flavor(flavor):
    try:
        return _FLAVORS[str(flavor).strip().lower()]
    except KeyError:
        raise exceptions.ConfigException(f"Unknown curvature flavor {flavor!r}")


class RadialProfile:
    """A function of r given by an expression, with exact derivatives up to order 2"""

    def __init__(self, spec):
        self.spec = spec if isinstance(spec, str) else str(spec)
        self.expression = profile(spec)
        self.derivatives = [self.expression]
        for order in (1, 2):
            self.derivatives.append(derivative(self.expression, "r", order))

    def __call__(self, r, order=0):
        return evaluate(self.derivatives[order], r=np.asarray(r, dtype=float))

    def is_constant(self):
        return not self.expression.depends_on("r")

    def __str__(self):
        return self.spec


class ModelSpace:
    """
    Rotationally symmetric smooth metric measure space dr^2 + psi(r)^2 g_S, weighted by exp(-phi(r)).
    Build it with make_model_space, which validates the profiles.
    """

    def __init__(self, n, m, warp, potential, R_max):
        self.n = int(n)
        self.m = m
        self.warp = warp
        self.potential = potential
        self.R_max = float(R_max)
        self._stencils = {}

    @property
    def name(self):
        return f"n={self.n},m={format_m(self.m)},psi={self.warp},phi={self.potential},R={self.R_max:g}"

    def __str__(self):
        return self.name

    def to_dict(self):
        return {
            "n": self.n,
            "m": format_m(self.m),
            "warp": self.warp.spec,
            "potential": self.potential.spec,
            "R_max": self.R_max,
        }

    def with_m(self, m):
        """A copy of the space with another synthetic dimension, the profiles are shared"""
        space = ModelSpace(self.n, parse_m(m), self.warp, self.potential, self.R_max)
        return space

    def psi(self, r, order=0):
        return self.warp(r, order)

    def phi(self, r, order=0):
        return self.potential(r, order)

    def density(self, r):
        """The weighted measure density exp(-phi) psi^(n-1)"""
        r = np.asarray(r, dtype=float)
        return np.exp(-self.phi(r)) * self.psi(r) ** (self.n - 1)

    def laplacian_of_r(self, r):
        """Δ_φ r = (n-1) psi'/psi - phi' for r > 0"""
        r = np.asarray(r, dtype=float)
        return (self.n - 1) * self.psi(r, 1) / self.psi(r) - self.phi(r, 1)

    def drift_expression(self):
        """(n-1) psi'/psi - phi' as an expression in r"""
        return sub(
            mul(Number(self.n - 1), div(self.warp.derivatives[1], self.warp.expression)),
            self.potential.derivatives[1],
        )

    def laplacian_expression(self, u):
        """Symbolic Δ_φ u = u'' + ((n-1) psi'/psi - phi') u' of a radial expression"""
        return add(derivative(u, "r", 2), mul(self.drift_expression(), derivative(u, "r", 1)))

    def is_constant_potential(self):
        if self.potential.is_constant():
            return True
        r = sample_lattice(0.0, self.R_max, defaults.SAMPLE_SPACING)
        return bool(np.max(np.abs(self.phi(r, 1))) <= defaults.CONSTANT_POTENTIAL_TOLERANCE)

    def stencil(self, nodes, dr):
        """
        Finite-volume coefficients on the uniform grid r_j = j dr, j = 0..nodes-1.
        Returns (face densities, cell volumes); the first cell is [0, dr/2], the last [R - dr/2, R].
        """
        key = (int(nodes), float(dr))
        cached = self._stencils.get(key)
        if cached is not None:
            return cached
        r = dr * np.arange(nodes)
        faces = r[:-1] + 0.5 * dr
        rho_faces = self.density(faces)
        lo = np.concatenate([[0.0], faces])
        hi = np.concatenate([faces, [r[-1]]])
        volumes = _integrate(self.density, lo, hi)
        self._stencils[key] = (rho_faces, volumes)
        return rho_faces, volumes


def _integrate(fn, lo, hi):
    # Gauss-Legendre on every interval
    x, wts = np.polynomial.legendre.leggauss(defaults.GAUSS_POINTS)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * x[None, :]
    return half * np.sum(wts[None, :] * fn(pts), axis=1)


def sample_lattice(lo, hi, spacing):
    """Lattice multiples of spacing inside [lo, hi] together with both end points"""
    start = math.floor(lo / spacing + 1e-9)
    stop = math.ceil(hi / spacing - 1e-9)
    return np.unique(np.clip(spacing * np.arange(start, stop + 1), lo, hi))


def make_model_space(n, m, warp, potential, R_max):
    """
    Build and validate a model space

    Args:
        n (int): the dimension, at least 2
        m (int|float|str): the synthetic dimension, m >= n or "inf"
        warp (str): the warp profile psi, a preset or an expression in r
        potential (str): the potential phi, a preset or an expression in r
        R_max (float): the outer radius of the domain
    Returns:
        the validated ModelSpace
    Raises:
        InvalidWarp, DimensionConvention, ParseError
    """
    n = int(n)
    m = parse_m(m)
    if n < 2:
        raise exceptions.ConfigException(f"dimension n must be at least 2, got {n}")
    if m < n:
        raise exceptions.ConfigException(f"synthetic dimension m must satisfy m >= n, got m={m}, n={n}")
    if R_max is None or float(R_max) <= 0:
        raise exceptions.ConfigException(f"R_max must be positive, got {R_max}")
    space = ModelSpace(n, m, RadialProfile(warp), RadialProfile(potential), R_max)

    tol = defaults.PROFILE_ORIGIN_TOLERANCE
    psi0 = float(space.psi(0.0))
    dpsi0 = float(space.psi(0.0, 1))
    if not abs(psi0) <= tol or not abs(dpsi0 - 1.0) <= tol:
        raise exceptions.InvalidWarp("warp must satisfy psi(0)=0 and psi'(0)=1",
                                     payload={"psi(0)": psi0, "psi'(0)": dpsi0})
    r = sample_lattice(0.0, space.R_max, defaults.SAMPLE_SPACING)[1:]
    psi = space.psi(r)
    bad = ~(np.isfinite(psi) & (psi > 0))
    if np.any(bad):
        raise exceptions.InvalidWarp("warp must be positive on (0, R_max]",
                                     payload={"r": float(r[np.argmax(bad)])})
    dens = space.density(r)
    bad = ~(np.isfinite(dens) & (dens > 0))
    if np.any(bad):
        raise exceptions.InvalidWarp("weighted density must be positive on (0, R_max]",
                                     payload={"r": float(r[np.argmax(bad)])})
    if m == n and not space.is_constant_potential():
        raise exceptions.DimensionConvention("m = n requires a constant potential",
                                             payload={"potential": str(space.potential)})
    logger.debug(f"model space {space.name}")
    return space


def _eigenvalues(space, r, m=None):
    m = space.m if m is None else m
    n = space.n
    psi, dpsi, ddpsi = space.psi(r), space.psi(r, 1), space.psi(r, 2)
    dphi, ddphi = space.phi(r, 1), space.phi(r, 2)
    ric_radial = -(n - 1) * ddpsi / psi
    ric_tangential = -ddpsi / psi + (n - 2) * (1.0 - dpsi ** 2) / psi ** 2
    ric_phi_radial = ric_radial + ddphi
    ric_phi_tangential = ric_tangential + dphi * dpsi / psi
    if math.isinf(m) or m == n:
        correction = np.zeros_like(ric_phi_radial)
    else:
        correction = dphi ** 2 / (m - n)
    return Munch(
        r=r,
        ric_radial=ric_radial,
        ric_tangential=ric_tangential,
        ric_phi_radial=ric_phi_radial,
        ric_phi_tangential=ric_phi_tangential,
        ric_phi_m_radial=ric_phi_radial - correction,
        ric_phi_m_tangential=ric_phi_tangential,
    )


def ricci_eigenvalues(space, r):
    """
    Curvature eigenvalues of the model space at radius r (scalar or array).
    Returns a Munch with ric, ric_phi and ric_phi_m in the radial and tangential slots.
    """
    ra = np.asarray(r, dtype=float)
    if np.any(ra <= 0) or np.any(ra > space.R_max * (1 + 1e-12)):
        raise exceptions.OutOfDomain(f"radius must lie in (0, {space.R_max}]", payload={"r": r})
    sample = _eigenvalues(space, ra)
    if ra.ndim == 0:
        return Munch({k: float(v) for k, v in sample.items()})
    return sample


def _check_region(space, region):
    lo, hi = float(region[0]), float(region[1])
    if lo < 0 or hi > space.R_max * (1 + 1e-12) or lo > hi:
        raise exceptions.OutOfDomain(f"region [{lo}, {hi}] is not inside [0, {space.R_max}]",
                                     payload={"region": [lo, hi]})
    return lo, hi


def _region_samples(space, lo, hi, spacing):
    r = sample_lattice(lo, hi, spacing)
    r = np.clip(r, 0.0, space.R_max)
    return np.unique(np.maximum(r, defaults.RADIAL_FLOOR))


def ricci_minimum(space, flavor, region, m=None, spacing=None):
    """Sampled minimum eigenvalue of Ric_φ or Ric_φ^m over a radial interval"""
    flavor = curvature_flavor(flavor)
    lo, hi = _check_region(space, region)
    spacing = spacing or defaults.SAMPLE_SPACING
    r = _region_samples(space, lo, hi, spacing)
    ev = _eigenvalues(space, r, m)
    if flavor == RIC_PHI:
        low = np.minimum(ev.ric_phi_radial, ev.ric_phi_tangential)
    else:
        low = np.minimum(ev.ric_phi_m_radial, ev.ric_phi_m_tangential)
    i = int(np.argmin(low))
    return float(low[i]), float(r[i])


def curvature_lower_bound(space, flavor, region, m=None):
    """
    Smallest k >= 0 with Ric_φ >= -(n-1)k (or Ric_φ^m >= -(m-1)k) on the sampled region.

    The region is sampled on a power-of-two lattice; the spacing is halved until two
    consecutive levels agree to defaults.REFINEMENT_TOLERANCE.
    :return: Munch(k, resolution, stable, worst_r, flavor, region)
    """
    flavor = curvature_flavor(flavor)
    m = space.m if m is None else parse_m(m)
    if flavor == RIC_PHI_M and math.isinf(m):
        raise exceptions.NeedFiniteM("Ric_φ^m bound needs a finite synthetic dimension")
    scale = (space.n - 1) if flavor == RIC_PHI else (m - 1)
    lo, hi = _check_region(space, region)

    def bound(spacing):
        low, where = ricci_minimum(space, flavor, (lo, hi), m=m, spacing=spacing)
        return max(0.0, -low / scale), where

    spacing = defaults.SAMPLE_SPACING
    k, where = bound(spacing)
    stable = False
    for _ in range(defaults.SAMPLE_MAX_HALVINGS):
        finer, finer_where = bound(spacing / 2)
        change = abs(finer - k) / max(1.0, abs(finer))
        spacing /= 2
        k, where = max(k, finer), finer_where
        if change < defaults.REFINEMENT_TOLERANCE:
            stable = True
            break
        logger.debug(f"curvature bound refining: k={k} change={change} spacing={spacing}")
    if not stable:
        logger.warning(f"curvature bound on [{lo}, {hi}] not stable at spacing {spacing}")
    return Munch(k=k, resolution=spacing, stable=stable, worst_r=where, flavor=flavor, region=[lo, hi])


def certify_curvature(space, flavor, region, k=None, m=None):
    """
    Certify a curvature bound: returns the k to use (the given one if admissible, else the minimal one).
    :raises HypothesisUnverified: when a user k is below the certified minimum
    """
    cert = curvature_lower_bound(space, flavor, region, m=m)
    if k is None:
        return cert.k
    if k < cert.k - defaults.MARGIN_TOLERANCE:
        raise exceptions.HypothesisUnverified(
            f"curvature bound k={k} is not certified on {cert.region}, need k >= {cert.k}",
            payload=dict(cert))
    return float(k)


def weighted_laplacian_radial(space, u, dr, edge="extrapolate"):
    """
    Second-order discrete Δ_φ u of a radial field sampled at r_j = j dr (last axis).

    The operator is in divergence form with exact weighted cell volumes, so it is
    self-adjoint for the weighted measure; at the origin cell it reduces to the
    limit rule n u''(0) with the ghost reflection u_{-1} = u_1.
    :param edge: "extrapolate" (one-sided stencil at the outer node) or "neumann" (zero flux)
    """
    u = np.asarray(u, dtype=float)
    nodes = u.shape[-1]
    if nodes < defaults.MIN_NODES:
        raise exceptions.GridTooCoarse(f"need at least {defaults.MIN_NODES} nodes, got {nodes}")
    rho_faces, volumes = space.stencil(nodes, dr)
    flux = rho_faces * np.diff(u, axis=-1) / dr
    out = np.empty_like(u)
    out[..., 0] = flux[..., 0] / volumes[0]
    out[..., 1:-1] = (flux[..., 1:] - flux[..., :-1]) / volumes[1:-1]
    if edge == "neumann":
        out[..., -1] = -flux[..., -1] / volumes[-1]
    else:
        r_edge = dr * (nodes - 1)
        d2 = (2 * u[..., -1] - 5 * u[..., -2] + 4 * u[..., -3] - u[..., -4]) / dr ** 2
        d1 = (3 * u[..., -1] - 4 * u[..., -2] + u[..., -3]) / (2 * dr)
        out[..., -1] = d2 + space.laplacian_of_r(r_edge) * d1
    return out


def weighted_mass(space, u, dr):
    """Total weighted mass sum_j V_j u_j, the discrete ∫ u exp(-phi) psi^(n-1) dr"""
    u = np.asarray(u, dtype=float)
    _, volumes = space.stencil(u.shape[-1], dr)
    return np.sum(u * volumes, axis=-1)


def gamma_delta_phi(space):
    """Δ_φ r on the unit sphere around the pole: (n-1) psi'(1)/psi(1) - phi'(1)"""
    if space.R_max < 1.0:
        raise exceptions.OutOfDomain("gamma_delta_phi needs R_max >= 1", payload={"R_max": space.R_max})
    return float(space.laplacian_of_r(1.0))


def comparison_bound(k, m, r):
    """(m-1) sqrt(k) coth(sqrt(k) r), with the k = 0 limit (m-1)/r"""
    r = np.asarray(r, dtype=float)
    if k == 0:
        return (m - 1) / r
    sk = math.sqrt(k)
    return (m - 1) * sk / np.tanh(sk * r)


def laplacian_comparison_margin(space, k, m, region):
    """
    min over the sampled region of (m-1) sqrt(k) coth(sqrt(k) r) - Δ_φ r.
    :raises HypothesisUnverified: if Ric_φ^m >= -(m-1)k cannot be certified on the region
    """
    m = parse_m(m)
    if math.isinf(m) or m < space.n:
        raise exceptions.HypothesisUnverified(f"comparison needs a finite m >= n, got m={format_m(m)}")
    if m == space.n and not space.is_constant_potential():
        raise exceptions.HypothesisUnverified("m = n with a non-constant potential cannot be certified")
    try:
        certify_curvature(space, RIC_PHI_M, region, k=k, m=m)
    except exceptions.NeedFiniteM as e:
        raise exceptions.HypothesisUnverified(str(e))
    lo, hi = _check_region(space, region)
    r = _region_samples(space, lo, hi, defaults.SAMPLE_SPACING)
    margin = comparison_bound(k, m, r) - space.laplacian_of_r(r)
    return float(np.min(margin))


def radial_distance(r1, r2, ray1=1, ray2=1):
    """Distance of two points on a common ray from the pole"""
    if ray1 != ray2 and r1 > 0 and r2 > 0:
        raise exceptions.NotSameRay("points are not on a common ray", payload={"ray1": ray1, "ray2": ray2})
    return abs(float(r1) - float(r2))


def shipped_spaces():
    """The model spaces used by the bundled scenarios and the property checks"""
    return {
        "euclidean": make_model_space(3, 3, "euclidean", "zero", 10.0),
        "hyperbolic": make_model_space(3, 3, "hyperbolic[1]", "zero", 10.0),
        "gaussian": make_model_space(3, "inf", "euclidean", "gaussian[1]", 10.0),
        "gaussian_m5": make_model_space(3, 5, "euclidean", "gaussian[1]", 4.0),
        "sphere": make_model_space(3, 3, "sphere[1]", "zero", 3.0),
    }
