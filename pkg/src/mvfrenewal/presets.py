"""Ready-made model families and their analytic oracles.

``classical``
    unit speed, constant mortality, births proportional to the current
    density (point evaluation at offset 0).
``delayed``
    the same, but births and crowding read the state ``tau`` time units ago.
``moving_average``
    births from the average density over the last ``tau`` time units;
    crowding reads the density's moving average.
``size_structured``
    growth speed ``gamma(x, z(t))`` saturating from ``g0`` to ``g_inf``,
    mortality ``mu + d gamma/dx`` and no renewal.

With ``crowding = 0`` the classical and delayed families have the
separable solution ``exp(r t - (r + mu) x)``, where ``r`` is the Lotka
exponent of the birth law.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .field import SpaceTimeGrid
from .model import AssumptionConstants, ModelError, ModelSpec, RenewalFunctional
from .numerics import bisect_root

PRESET_NAMES = ("classical", "delayed", "moving_average", "size_structured")
ORACLE_PRESETS = ("classical", "delayed")

_DEFAULT_TAU = {"classical": 0.0, "delayed": 0.5, "moving_average": 0.5, "size_structured": 0.0}
_DEFAULT_CROWDING = {"classical": 0.0, "delayed": 0.0, "moving_average": 0.2, "size_structured": 0.0}


@dataclass(frozen=True)
class PresetParams:
    """Parameters shared by all presets.

    ``beta`` birth intensity, ``mu`` mortality, ``crowding`` strength of the
    saturating density feedback, ``g0``/``g_inf`` growth speed at size 0 and
    at large size (size-structured only). ``nt``/``nx`` are grid nodes per
    unit of time and of size. ``None`` picks the preset's default.
    """

    beta: float = 2.0
    mu: float = 1.0
    tau: float | None = None
    a: float = 1.0
    x_max: float = 20.0
    crowding: float | None = None
    g0: float = 1.0
    g_inf: float = 2.0
    nt: int = 200
    nx: int = 200

    def resolved(self, name):
        tau = _DEFAULT_TAU[name] if self.tau is None else float(self.tau)
        k = _DEFAULT_CROWDING[name] if self.crowding is None else float(self.crowding)
        p = replace(self, tau=tau, crowding=k)
        for key in ("beta", "mu", "tau", "crowding"):
            if not getattr(p, key) >= 0:
                raise ModelError(f"preset parameter {key} must be >= 0, got {getattr(p, key)}")
        if p.a <= 0 or p.x_max <= 0 or p.nt < 1 or p.nx < 1:
            raise ModelError("a, x_max, nt and nx must be positive")
        return p

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ModelError(f"unknown preset parameter(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def as_dict(self):
        return asdict(self)


def saturation(v):
    """``v / (1 + v)``: bounded, increasing, 1-Lipschitz on v >= 0."""
    v = np.asarray(v, dtype=float)
    out = v / (1.0 + v)
    return out if out.ndim else float(out)


def analytic_classical(beta, mu):
    """Separable solution ``exp(r t - (r + mu) x)`` with ``r = beta - mu``."""
    r = beta - mu
    return _separable(r, r + mu)


def _separable(r, decay):
    def u(t, x):
        return np.exp(r * np.asarray(t, dtype=float) - decay * np.asarray(x, dtype=float))
    u.rate = r
    u.decay = decay
    return u


def delayed_growth_rate(beta, mu, tau):
    """Real root ``r`` of ``beta * exp(-r tau) = r + mu`` on ``[-mu, beta]``."""
    if not beta > 0:
        raise ModelError("growth rate needs beta > 0")
    if tau == 0:
        return float(beta - mu)
    g = lambda r: beta * math.exp(-r * tau) - r - mu  # noqa: E731
    return bisect_root(g, -mu, beta, tol=1e-14)


def analytic_delayed(beta, mu, tau):
    """Separable solution of the delayed family with the delayed Lotka exponent."""
    r = delayed_growth_rate(beta, mu, tau)
    return _separable(r, r + mu)


def bump(x, lo, hi, amp=1.0):
    """C^1 cubic bump on ``[lo, hi]``: ``amp * (1 - 3 s^2 + 2 |s|^3)``.

    ``s`` is the offset from the midpoint in half-widths. The integral is
    ``amp * (hi - lo) / 2`` and the slope never exceeds ``1.5 amp / half-width``.
    """
    x = np.asarray(x, dtype=float)
    half = 0.5 * (hi - lo)
    s = np.abs(x - 0.5 * (lo + hi)) / half
    out = np.where(s < 1.0, amp * (1.0 - 3.0 * s * s + 2.0 * s ** 3), 0.0)
    return out if out.ndim else float(out)


def _bump_support(x_max):
    return 0.1 * x_max, 0.5 * x_max


def _exponential_constants(p, r, crowding_lip):
    decay = r + p.mu
    sup = 1.0 if r >= 0 else math.exp(-r * p.tau)
    return AssumptionConstants(
        c_hat=1.0, eps0=0.9, kappa=p.beta, L_phi=decay * sup,
        L_c=0.0, L_lambda=crowding_lip, L_W=crowding_lip, L_K=0.0,
        M_lambda=p.mu + crowding_lip, M_W=p.mu + crowding_lip,
        phi_sup=sup, phi_inf1=sup / decay)


def _unit_speed(t, x, q):
    return np.ones_like(np.asarray(x, dtype=float))


def _zero_slope(t, x, q):
    return np.zeros_like(np.asarray(x, dtype=float))


def _classical(p: PresetParams) -> ModelSpec:
    if not p.beta > 0:
        raise ModelError("classical preset needs beta > 0")
    beta, mu, k = p.beta, p.mu, p.crowding
    r = beta - mu
    phi = _separable(r, r + mu)
    atom = RenewalFunctional(atoms=((0.0, beta),))

    def lam(t, x, w, q):
        return -mu - k * saturation(q.at(0.0)) + 0.0 * np.asarray(x, dtype=float)

    return ModelSpec(c=_unit_speed, lam=lam, phi=phi, tau=0.0, a=p.a, x_max=p.x_max,
                     kernel=lambda t, x: atom, dc_dx=_zero_slope,
                     constants=_exponential_constants(p, r, k), name="classical", params=p.as_dict())


def _delayed(p: PresetParams) -> ModelSpec:
    beta, mu, k, tau = p.beta, p.mu, p.crowding, p.tau
    r = delayed_growth_rate(beta, mu, tau)
    phi = _separable(r, r + mu)
    atom = RenewalFunctional(atoms=((-tau, beta),))

    def lam(t, x, w, q):
        return -mu - k * saturation(q.at(-tau)) + 0.0 * np.asarray(x, dtype=float)

    return ModelSpec(c=_unit_speed, lam=lam, phi=phi, tau=tau, a=p.a, x_max=p.x_max,
                     kernel=lambda t, x: atom, dc_dx=_zero_slope,
                     constants=_exponential_constants(p, r, k), name="delayed", params=p.as_dict())


def _moving_average(p: PresetParams) -> ModelSpec:
    if not p.tau > 0:
        raise ModelError("moving_average preset needs tau > 0")
    beta, mu, k, tau = p.beta, p.mu, p.crowding, p.tau
    lo, hi = _bump_support(p.x_max)
    half = 0.5 * (hi - lo)
    # phi = c0 exp(-x/ell) + bump; births beta * int phi must return phi(0) = c0
    if beta > 0:
        ell = 0.5 / beta
        c0, amp = 1.0, 1.0 / (2.0 * beta * half)
    else:
        ell, c0, amp = 1.0, 0.0, 1.0

    def phi(t, x):
        x = np.asarray(x, dtype=float)
        return (c0 * np.exp(-x / ell) + bump(x, lo, hi, amp)) * np.ones_like(np.asarray(t, dtype=float))

    kern = RenewalFunctional(density=beta / tau)

    def lam(t, x, w, q):
        return -mu - k * saturation(w.mean()) + 0.0 * np.asarray(x, dtype=float)

    consts = AssumptionConstants(
        c_hat=1.0, eps0=0.9, kappa=beta, L_phi=c0 / ell + 1.5 * amp / half,
        L_c=0.0, L_lambda=k, L_W=k, L_K=0.0, M_lambda=mu + k, M_W=mu + k,
        phi_sup=max(c0, amp + c0 * math.exp(-lo / ell)), phi_inf1=c0 * ell + amp * half)
    return ModelSpec(c=_unit_speed, lam=lam, phi=phi, tau=tau, a=p.a, x_max=p.x_max,
                     kernel=lambda t, x: kern, dc_dx=_zero_slope, constants=consts,
                     name="moving_average", params=p.as_dict())


def _size_structured(p: PresetParams) -> ModelSpec:
    g0, g_inf, mu, theta = p.g0, p.g_inf, p.mu, p.crowding
    if not g0 > 0:
        raise ModelError(
            f"size_structured growth speed at size 0 must be > 0, got g0={g0}; "
            "the speed must be strictly positive near the lateral boundary")
    if not g_inf > 0:
        raise ModelError(f"g_inf must be > 0, got {g_inf}")
    dg = g_inf - g0

    def factor(q):
        return (1.0 + theta / (1.0 + q.at(0.0))) / (1.0 + theta)

    def c(t, x, q):
        x = np.asarray(x, dtype=float)
        return (g_inf - dg * np.exp(-x)) * factor(q)

    def dc_dx(t, x, q):
        x = np.asarray(x, dtype=float)
        return dg * np.exp(-x) * factor(q)

    def lam(t, x, w, q):
        return -mu - dc_dx(t, x, q)

    lo, hi = _bump_support(p.x_max)
    half = 0.5 * (hi - lo)

    def phi(t, x):
        return bump(x, lo, hi) * np.ones_like(np.asarray(t, dtype=float))

    c_hat = max(g0, g_inf)
    consts = AssumptionConstants(
        c_hat=c_hat, eps0=min(min(g0, g_inf) / (c_hat * (1.0 + theta)), 0.999), kappa=0.0,
        L_phi=1.5 / half, L_c=max(abs(dg), c_hat * theta / (1.0 + theta)), L_lambda=abs(dg),
        L_W=0.0, L_K=0.0, M_lambda=mu + abs(dg), M_W=mu, phi_sup=1.0, phi_inf1=half)
    return ModelSpec(c=c, lam=lam, phi=phi, tau=p.tau, a=p.a, x_max=p.x_max, kernel=None,
                     dc_dx=dc_dx, constants=consts, conservative=(mu == 0.0),
                     name="size_structured", params=p.as_dict())


_BUILDERS = {"classical": _classical, "delayed": _delayed,
             "moving_average": _moving_average, "size_structured": _size_structured}


def make_preset(name, params: PresetParams | dict | None = None, **overrides) -> ModelSpec:
    """Build one of :data:`PRESET_NAMES`; keyword overrides patch ``params``."""
    if name not in _BUILDERS:
        raise ModelError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    if params is None:
        params = PresetParams()
    elif isinstance(params, dict):
        params = PresetParams.from_dict(params)
    if overrides:
        params = PresetParams.from_dict({**params.as_dict(), **overrides})
    return _BUILDERS[name](params.resolved(name))


def oracle_for(model: ModelSpec):
    """Closed-form solution of a preset model, or ``None`` when there is none."""
    p = model.params
    if model.name not in ORACLE_PRESETS or p.get("crowding", 0.0) != 0.0:
        return None
    if model.name == "classical":
        return analytic_classical(p["beta"], p["mu"])
    return analytic_delayed(p["beta"], p["mu"], p["tau"])


def preset_grid(model: ModelSpec, scale=1.0) -> SpaceTimeGrid:
    """Grid at the preset's resolution, multiplied by ``scale``."""
    nt = int(round(model.params.get("nt", 200) * scale))
    nx = int(round(model.params.get("nx", 200) * scale))
    return SpaceTimeGrid.from_resolution(model.a, model.tau, model.x_max, nt, nx)
