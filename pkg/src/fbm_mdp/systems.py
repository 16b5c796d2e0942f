"""Named test systems.

SS-LIN      f = -x, sigma = 1
SS-NL       f = -x + sin x, sigma = 1 + 0.1 tanh x
SS-FREE     f = 0, sigma = 1 (deviation process is exactly B^H / h(eps))
TS-OU       slow f1 = -x + cos y, sigma1 = 1; fast f2 = -2 a y, sigma2 = 1, a = 1
TS-OUVAR    as TS-OU with a(x) = 1 + 0.5 tanh(x)^2

For the fast OU equation the invariant law is N(0, 1/(4a)), so the averaged
slow drift is ``-x + exp(-1/(8a))``.
"""

import numpy as np

from .sde import SystemSpec


def _a_const(x):
    return np.ones(np.shape(x)[:-1] + (1,))


def _a_var(x):
    return 1.0 + 0.5 * np.tanh(x[..., :1]) ** 2


def ss_lin(x0=1.0):
    return SystemSpec(
        mode="single_scale", m=1, d1=1,
        f=lambda x: -x,
        sigma=lambda x: np.ones_like(x),
        jacobian=lambda x: -np.ones(np.shape(x) + (1,)),
        x0=(x0,), L=1.0, L_prime=1.0, name="SS-LIN")


def ss_nl(x0=1.0):
    return SystemSpec(
        mode="single_scale", m=1, d1=1,
        f=lambda x: -x + np.sin(x),
        sigma=lambda x: 1.0 + 0.1 * np.tanh(x),
        jacobian=lambda x: (-1.0 + np.cos(x))[..., None],
        x0=(x0,), L=2.0, L_prime=2.0, name="SS-NL")


def ss_free(x0=0.0):
    return SystemSpec(
        mode="single_scale", m=1, d1=1,
        f=lambda x: np.zeros_like(x),
        sigma=lambda x: np.ones_like(x),
        jacobian=lambda x: np.zeros(np.shape(x) + (1,)),
        x0=(x0,), L=1.0, L_prime=1.0, name="SS-FREE")


def _two_scale(a, name, x0, y0):
    return SystemSpec(
        mode="two_scale", m=1, n=1, d1=1, d2=1,
        f1=lambda x, y: -x + np.cos(y),
        sigma1=lambda x: np.ones_like(x),
        f2=lambda x, y: -2.0 * a(x) * y,
        sigma2=lambda x, y: np.ones_like(y),
        x0=(x0,), y0=(y0,), L=2.0 if name == "TS-OU" else 3.0, L_prime=2.0,
        beta1=4.0, beta2=4.0, name=name)


def ts_ou(x0=1.0, y0=0.0):
    return _two_scale(_a_const, "TS-OU", x0, y0)


def ts_ouvar(x0=1.0, y0=0.0):
    return _two_scale(_a_var, "TS-OUVAR", x0, y0)


def a_function(name):
    """The fast-OU coefficient ``a(x)`` of a two-scale test system."""
    return {"TS-OU": _a_const, "TS-OUVAR": _a_var}[name]


def f1bar_exact(name):
    """Closed-form averaged drift ``x -> -x + exp(-1/(8 a(x)))``."""
    a = a_function(name)
    return lambda x: -x + np.exp(-1.0 / (8.0 * a(np.atleast_1d(x)[..., None])[..., 0]))


def f1bar_exact_jacobian(name):
    if name == "TS-OU":
        return lambda x: -np.ones(np.shape(x) + (1,))

    def jac(x):
        th = np.tanh(x)
        a = 1.0 + 0.5 * th ** 2
        da = th * (1.0 - th ** 2)
        return (-1.0 + np.exp(-1.0 / (8 * a)) * da / (8 * a ** 2))[..., None]
    return jac


SYSTEMS = {"SS-LIN": ss_lin, "SS-NL": ss_nl, "SS-FREE": ss_free, "TS-OU": ts_ou, "TS-OUVAR": ts_ouvar}


def get_system(name, **kw):
    try:
        return SYSTEMS[name](**kw)
    except KeyError:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}") from None
