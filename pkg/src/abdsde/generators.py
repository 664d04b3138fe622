"""Coefficient pairs (f, g), their anticipation functionals and audits.

A generator reads future solution values only through conditional
expectations of declared functionals: at time t the solver hands f and g
the vector e = (E[phi_j(Y_ant, Z_ant) | current information])_j.  Every
builtin has exactly this shape, and it keeps the anticipated terms
computable with one regression per functional.

Lipschitz metadata declares constants for the *composite* map, i.e. with
the functional folded in, measured against point differences of all four
argument groups (y, z, anticipated-y, anticipated-z).  These are the
constants the contraction parameters consume.  `audit_lipschitz` probes
them empirically with point-mass anticipated values: a joint ratio for f
and a per-group decomposition for g (y-group -> c, z -> alpha1,
anticipated-z -> alpha2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import Infeasible, NonFinite, ShapeMismatch, UnknownName

Array = np.ndarray


@dataclass(frozen=True)
class AnticipationFunctional:
    """A declared map phi(y_ant, z_ant) -> R^width, fed to f/g via condexp."""

    name: str
    width: int
    fn: Callable[[Array, Array], Array]
    reads_y: bool = True
    reads_z: bool = False

    def __call__(self, y_ant: Array, z_ant: Array) -> Array:
        out = self.fn(y_ant, z_ant)
        return np.asarray(out, dtype=float)


@dataclass(frozen=True)
class LipschitzData:
    """Declared constants: |df|^2 <= c * (sum of squared argument diffs),
    |dg|^2 <= c*(dy-group) + alpha1*|dz|^2 + alpha2*(anticipated-dz)."""

    c: float
    alpha1: float = 0.0
    alpha2: float = 0.0

    def __post_init__(self):
        if self.c < 0 or self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("Lipschitz constants must be nonnegative")


def check_feasible(lip: LipschitzData, M: float) -> float:
    """Return alpha1 + alpha2*M, raising Infeasible when it is >= 1."""
    load = lip.alpha1 + lip.alpha2 * M
    if load >= 1.0:
        raise Infeasible(
            f"alpha1 + alpha2*M = {load:.6g} >= 1 (alpha1={lip.alpha1}, "
            f"alpha2={lip.alpha2}, M={M})"
        )
    return load


@dataclass(frozen=True)
class GeneratorSpec:
    """Coefficients f: (t,y,z,e) -> R^m and g: (t,y,z,e) -> R^{m x l}.

    y has shape (P, m), z has shape (P, m, d), e has shape (P, q_total)
    where q_total = sum of functional widths.
    """

    name: str
    m: int
    d: int
    l: int
    f: Callable[[float, Array, Array, Array], Array]
    g: Callable[[float, Array, Array, Array], Array]
    functionals: tuple
    lip: LipschitzData
    g_depends_on_z: bool = False
    g_depends_on_anticipation: bool = False

    @property
    def q_total(self) -> int:
        return sum(phi.width for phi in self.functionals)

    @property
    def anticipates(self) -> bool:
        return bool(self.functionals)

    def eval_functionals(self, y_ant: Array, z_ant: Array) -> Array:
        """Stack phi_j(y_ant, z_ant) into (P, q_total)."""
        P = y_ant.shape[0]
        if not self.functionals:
            return np.zeros((P, 0))
        return np.concatenate([phi(y_ant, z_ant) for phi in self.functionals], axis=1)


def evaluate(spec: GeneratorSpec, t: float, y: Array, z: Array, e: Array):
    """Pointwise (f, g) evaluation with shape and finiteness checks."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    e = np.asarray(e, dtype=float)
    if y.ndim != 2 or y.shape[1] != spec.m:
        raise ShapeMismatch(f"y must be (P, {spec.m}), got {y.shape}")
    if z.ndim != 3 or z.shape[1:] != (spec.m, spec.d):
        raise ShapeMismatch(f"z must be (P, {spec.m}, {spec.d}), got {z.shape}")
    if e.ndim != 2 or e.shape[1] != spec.q_total:
        raise ShapeMismatch(f"e must be (P, {spec.q_total}), got {e.shape}")
    for arr, name in ((y, "y"), (z, "z"), (e, "e")):
        if not np.all(np.isfinite(arr)):
            raise NonFinite(f"non-finite values in generator argument {name}")
    f_val = np.asarray(spec.f(t, y, z, e), dtype=float)
    g_val = np.asarray(spec.g(t, y, z, e), dtype=float)
    if f_val.shape != (y.shape[0], spec.m):
        raise ShapeMismatch(f"f returned {f_val.shape}, wanted (P, {spec.m})")
    if g_val.shape != (y.shape[0], spec.m, spec.l):
        raise ShapeMismatch(f"g returned {g_val.shape}, wanted (P, {spec.m}, {spec.l})")
    return f_val, g_val


# ---------------------------------------------------------------------------
# builtin catalog
# ---------------------------------------------------------------------------

def _z_norm(z: Array) -> Array:
    # Euclidean norm over the (m, d) axes, shape (P,)
    return np.sqrt(np.sum(z * z, axis=(1, 2)))


def _zeros_g(l: int):
    def g(t, y, z, e):
        return np.zeros((y.shape[0], y.shape[1], l))
    return g


def _phi_identity_y(m: int) -> AnticipationFunctional:
    return AnticipationFunctional(
        name="anticipated_y", width=m,
        fn=lambda ya, za: ya, reads_y=True, reads_z=False)


def _phi_identity_z(d: int) -> AnticipationFunctional:
    return AnticipationFunctional(
        name="anticipated_z", width=d,
        fn=lambda ya, za: za.reshape(za.shape[0], -1), reads_y=False, reads_z=True)


def _scalar_drift_from_e(t, y, z, e):
    return e[:, :1]


def _growth_g(l: int):
    """g(t, y, z) = y + |z|/sqrt(3), scalar values broadcast to (P, 1, l)."""
    def g(t, y, z, e):
        vals = y[:, 0] + _z_norm(z) / math.sqrt(3.0)
        return np.repeat(vals[:, None, None], l, axis=2)
    return g


def builtin_generator(name: str, **params) -> GeneratorSpec:
    """Construct a catalog generator.

    Catalog: zero, constant_rho(rho), linear_bsde(a, rho), anticipated_drift,
    example41_f1, example41_f2, example41_g, example42_f1, example42_ftilde,
    example42_f2, duality_linear(mu, mu_bar, sigma, sigma_bar, kappa, rho).
    Dimension overrides m/d/l default to 1.
    """
    m = int(params.pop("m", 1))
    d = int(params.pop("d", 1))
    l = int(params.pop("l", 1))

    def unknown_params(allowed):
        extra = set(params) - set(allowed)
        if extra:
            raise UnknownName(f"unknown parameters {sorted(extra)} for '{name}'")

    if name == "zero":
        unknown_params(())
        return GeneratorSpec(
            name=name, m=m, d=d, l=l,
            f=lambda t, y, z, e: np.zeros((y.shape[0], y.shape[1])),
            g=_zeros_g(l), functionals=(),
            lip=LipschitzData(c=0.0))

    if name == "constant_rho":
        unknown_params(("rho",))
        rho = float(params.get("rho", 1.0))
        return GeneratorSpec(
            name=name, m=m, d=d, l=l,
            f=lambda t, y, z, e: np.full((y.shape[0], y.shape[1]), rho),
            g=_zeros_g(l), functionals=(),
            lip=LipschitzData(c=0.0))

    if name == "linear_bsde":
        unknown_params(("a", "rho"))
        a = float(params.get("a", 1.0))
        rho = float(params.get("rho", 0.0))
        return GeneratorSpec(
            name=name, m=m, d=d, l=l,
            f=lambda t, y, z, e: a * y + rho,
            g=_zeros_g(l), functionals=(),
            lip=LipschitzData(c=a * a))

    if name == "anticipated_drift":
        unknown_params(())
        return GeneratorSpec(
            name=name, m=1, d=d, l=l,
            f=_scalar_drift_from_e,
            g=_zeros_g(l), functionals=(_phi_identity_y(1),),
            lip=LipschitzData(c=1.0))

    if name in ("example41_f1", "example41_f2"):
        unknown_params(())
        if name == "example41_f1":
            def phi_fn(ya, za):
                x = ya[:, 0]
                return (x + np.sin(2.0 * x) + _z_norm(za) + 2.0)[:, None]
        else:
            def phi_fn(ya, za):
                x = ya[:, 0]
                v = za[:, 0, 0] if za.shape[2] == 1 else _z_norm(za)
                return (x + 2.0 * np.abs(np.cos(x)) + np.sin(v) - 2.0)[:, None]
        phi = AnticipationFunctional(name=f"{name}_phi", width=1, fn=phi_fn,
                                     reads_y=True, reads_z=True)
        # |dphi| <= 3|dy| + |dz|  =>  |dphi|^2 <= 10 (|dy|^2 + |dz|^2)
        return GeneratorSpec(
            name=name, m=1, d=d, l=l,
            f=_scalar_drift_from_e,
            g=_growth_g(l), functionals=(phi,),
            lip=LipschitzData(c=10.0, alpha1=1.0 / 3.0),
            g_depends_on_z=True)

    if name == "example41_g":
        unknown_params(())
        return GeneratorSpec(
            name=name, m=1, d=d, l=l,
            f=lambda t, y, z, e: np.zeros((y.shape[0], 1)),
            g=_growth_g(l), functionals=(),
            lip=LipschitzData(c=1.0, alpha1=1.0 / 3.0),
            g_depends_on_z=True)

    if name in ("example42_f1", "example42_ftilde", "example42_f2"):
        unknown_params(())
        if name == "example42_f1":
            fn = lambda x: x - np.sin(2.0 * x) + 2.0
            c = 9.0
        elif name == "example42_ftilde":
            fn = lambda x: x + np.cos(x)
            c = 4.0
        else:
            fn = lambda x: x + 2.0 * np.cos(x) - 1.0
            c = 9.0
        phi = AnticipationFunctional(
            name=f"{name}_phi", width=1,
            fn=lambda ya, za, _fn=fn: _fn(ya[:, 0])[:, None],
            reads_y=True, reads_z=False)
        return GeneratorSpec(
            name=name, m=1, d=d, l=l,
            f=_scalar_drift_from_e,
            g=_zeros_g(l), functionals=(phi,),
            lip=LipschitzData(c=c))

    if name == "duality_linear":
        unknown_params(("mu", "mu_bar", "sigma", "sigma_bar", "kappa", "rho"))
        mu = float(params.get("mu", 0.0))
        mu_bar = float(params.get("mu_bar", 0.0))
        sigma = np.atleast_1d(np.asarray(params.get("sigma", 0.0), dtype=float))
        sigma_bar = np.atleast_1d(np.asarray(params.get("sigma_bar", 0.0), dtype=float))
        kappa = np.atleast_1d(np.asarray(params.get("kappa", 0.0), dtype=float))
        rho = float(params.get("rho", 0.0))
        if sigma.shape != (d,) or sigma_bar.shape != (d,):
            raise ShapeMismatch(f"sigma/sigma_bar must have shape ({d},)")
        if kappa.shape != (l,):
            raise ShapeMismatch(f"kappa must have shape ({l},)")
        kap2 = float(kappa @ kappa)

        functionals = (_phi_identity_y(1), _phi_identity_z(d))

        def f(t, y, z, e):
            e_y = e[:, :1]
            e_z = e[:, 1:1 + d]
            out = ((mu + kap2) * y[:, 0]
                   + mu_bar * e_y[:, 0]
                   + z[:, 0, :] @ sigma
                   + e_z @ sigma_bar
                   + rho)
            return out[:, None]

        def g(t, y, z, e):
            return y[:, :, None] * kappa[None, None, :]

        c_f = (mu + kap2) ** 2 + float(sigma @ sigma) + mu_bar ** 2 \
            + float(sigma_bar @ sigma_bar)
        return GeneratorSpec(
            name=name, m=1, d=d, l=l, f=f, g=g, functionals=functionals,
            lip=LipschitzData(c=max(c_f, kap2)),
            g_depends_on_anticipation=False)

    raise UnknownName(f"no builtin generator named '{name}'")


def with_lipschitz(spec: GeneratorSpec, **kwargs) -> GeneratorSpec:
    """Copy a spec with overridden Lipschitz metadata (used for audits)."""
    return replace(spec, lip=replace(spec.lip, **kwargs))


# ---------------------------------------------------------------------------
# empirical Lipschitz audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditReport:
    observed_c_f: float
    observed_c_g: float
    observed_alpha1: float
    observed_alpha2: float
    declared: LipschitzData
    samples: int
    passed: bool

    def __str__(self):
        lines = [
            f"f joint ratio     {self.observed_c_f:.6g} (declared c={self.declared.c:.6g})",
            f"g y-group ratio   {self.observed_c_g:.6g} (declared c={self.declared.c:.6g})",
            f"g z ratio         {self.observed_alpha1:.6g} (declared alpha1={self.declared.alpha1:.6g})",
            f"g ant-z ratio     {self.observed_alpha2:.6g} (declared alpha2={self.declared.alpha2:.6g})",
            f"samples={self.samples}  ->  {'PASS' if self.passed else 'FAIL'}",
        ]
        return "\n".join(lines)


def _max_ratio(num: Array, den: Array) -> float:
    mask = den > 1e-14
    if not np.any(mask):
        return 0.0
    return float(np.max(num[mask] / den[mask]))


def audit_lipschitz(spec: GeneratorSpec, samples: int = 2000,
                    seed: int = 0) -> AuditReport:
    """Probe the declared constants with random argument pairs.

    Anticipated processes are probed with point masses (a deterministic
    future value), for which the conditional-expectation terms reduce to
    plain squared differences.  Arguments are standard Gaussian draws
    scaled by {0.1, 1, 10}; PASS requires every observed ratio to stay
    at or below its declared constant times (1 + 1e-9).
    """
    if samples < 1000:
        raise ValueError("audit needs at least 1000 samples")
    rng = np.random.Generator(np.random.Philox(seed=np.random.SeedSequence(seed)))
    per_scale = samples // 3 + 1
    m, d = spec.m, spec.d
    obs = {"c_f": 0.0, "c_g": 0.0, "a1": 0.0, "a2": 0.0}
    ts = np.array([0.0, 0.37, 1.0])

    def pack(y, z, ya, za):
        e = spec.eval_functionals(ya, za)
        return y, z, e

    for scale in (0.1, 1.0, 10.0):
        def draw(shape):
            return scale * rng.standard_normal(shape)

        base = [draw((per_scale, m)), draw((per_scale, m, d)),
                draw((per_scale, m)), draw((per_scale, m, d))]
        pert = [draw((per_scale, m)), draw((per_scale, m, d)),
                draw((per_scale, m)), draw((per_scale, m, d))]
        t = float(rng.choice(ts))

        def sq(a):
            return np.sum((a.reshape(a.shape[0], -1)) ** 2, axis=1)

        # f: all four groups vary jointly
        y1, z1, ya1, za1 = base
        y2, z2, ya2, za2 = [b + p for b, p in zip(base, pert)]
        f1, g1 = evaluate(spec, t, *pack(y1, z1, ya1, za1))
        f2, g2 = evaluate(spec, t, *pack(y2, z2, ya2, za2))
        den = sq(y1 - y2) + sq(z1 - z2) + sq(ya1 - ya2) + sq(za1 - za2)
        obs["c_f"] = max(obs["c_f"], _max_ratio(sq(f1 - f2), den))

        # g decomposition: vary one group at a time
        _, g_y = evaluate(spec, t, *pack(y2, z1, ya2, za1))
        obs["c_g"] = max(obs["c_g"], _max_ratio(
            sq(g1 - g_y), sq(y1 - y2) + sq(ya1 - ya2)))
        _, g_z = evaluate(spec, t, *pack(y1, z2, ya1, za1))
        obs["a1"] = max(obs["a1"], _max_ratio(sq(g1 - g_z), sq(z1 - z2)))
        _, g_za = evaluate(spec, t, *pack(y1, z1, ya1, za2))
        obs["a2"] = max(obs["a2"], _max_ratio(sq(g1 - g_za), sq(za1 - za2)))

    slack = 1.0 + 1e-9
    lip = spec.lip
    passed = (obs["c_f"] <= lip.c * slack
              and obs["c_g"] <= lip.c * slack
              and obs["a1"] <= lip.alpha1 * slack
              and obs["a2"] <= lip.alpha2 * slack)
    return AuditReport(
        observed_c_f=obs["c_f"], observed_c_g=obs["c_g"],
        observed_alpha1=obs["a1"], observed_alpha2=obs["a2"],
        declared=lip, samples=3 * per_scale, passed=passed)
