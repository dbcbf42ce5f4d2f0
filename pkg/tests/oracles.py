"""Reference computations that do not use the package's closed forms.

* Moment integrands are evaluated by adaptive quadrature in whitened
  coordinates: ``x = mu + L z`` with ``L L^T = Sigma`` and, for Gaussian
  populations, ``theta = c + L_pop w``.
* The spike update is checked against the explicit Gaussian product
  (precision addition with matrix inverses).
"""

import math

import numpy as np
from scipy import integrate, stats

from ppadf.model import GaussianPop, IntervalUniform, Mixture, Single, UniformAll

LIM = 11.0  # whitened half-width; the standard normal mass beyond is ~4e-28


def tuning(sensor, x, theta):
    """Tuning curve for arrays of states (k, n) and marks (k, m)."""
    v = x @ sensor.H.T - theta
    return sensor.h * np.exp(-0.5 * np.einsum("ki,ij,kj->k", v, sensor.R, v))


def _moment_integrand(mean, cov, sensor, L, pop, Lp=None):
    """Vector integrand [lambda, (x - mu) lambda, vec((x - mu)(x - mu)^T - Sigma) lambda].

    Returned as a function of stacked whitened coordinates (z, w) with the
    standard-normal weights already applied.
    """
    n = mean.size
    m = sensor.m

    def f(pts):
        z = pts[:, :n]
        x = mean + z @ L.T
        weight = np.exp(-0.5 * np.sum(z * z, axis=1)) / (2 * math.pi) ** (n / 2)
        if isinstance(pop, Single):
            theta = np.broadcast_to(pop.theta, (pts.shape[0], m))
        elif isinstance(pop, GaussianPop):
            w = pts[:, n:]
            theta = pop.c + w @ Lp.T
            weight = weight * np.exp(-0.5 * np.sum(w * w, axis=1)) / (2 * math.pi) ** (m / 2)
        elif isinstance(pop, IntervalUniform):
            u = pts[:, n:n + 1]
            theta = pop.a + (pop.b - pop.a) * u
            weight = weight * (pop.b - pop.a)
        elif isinstance(pop, UniformAll):
            # theta over R^m, shifted to the tuning peak: theta = Hx + w
            w = pts[:, n:]
            theta = x @ sensor.H.T + w
        else:
            raise TypeError(type(pop).__name__)
        lam = tuning(sensor, x, theta) * weight
        d = x - mean
        outer = (d[:, :, None] * d[:, None, :] - cov).reshape(-1, n * n)
        return np.concatenate([lam[:, None], d * lam[:, None], outer * lam[:, None]], axis=1)

    return f


def _domain(mean, cov, sensor, pop):
    n = mean.size
    lo = [-LIM] * n
    hi = [LIM] * n
    if isinstance(pop, GaussianPop):
        lo += [-LIM] * sensor.m
        hi += [LIM] * sensor.m
    elif isinstance(pop, IntervalUniform):
        lo += [0.0]
        hi += [1.0]
    elif isinstance(pop, UniformAll):
        # tuning width along each sensory axis: sqrt of the diagonal of R^-1
        span = LIM * np.sqrt(np.diag(np.linalg.inv(sensor.R)))
        lo += list(-span)
        hi += list(span)
    return np.array(lo), np.array(hi)


def _product_rule(mean, cov, sensor, pop, N):
    """Tensor-product Gauss rule over the whitened coordinates (z, w).

    Gaussian-weighted axes use Gauss-Hermite nodes, the interval axis uses
    Gauss-Legendre nodes. Returned weights integrate plain Lebesgue measure.
    """
    x, w = np.polynomial.hermite_e.hermegauss(N)
    herm = (x, w * np.exp(0.5 * x * x))
    axes = [herm] * mean.size
    if isinstance(pop, GaussianPop):
        axes += [herm] * sensor.m
    elif isinstance(pop, IntervalUniform):
        u, wu = np.polynomial.legendre.leggauss(N)
        axes.append((0.5 * (u + 1.0), 0.5 * wu))
    elif isinstance(pop, UniformAll):
        for s in np.sqrt(np.diag(np.linalg.inv(sensor.R))):
            axes.append((s * herm[0], s * herm[1]))
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    weights = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in weights], axis=1), axis=1)
    return pts, wts


def population_moments(mean, cov, sensor, pop, rtol=1e-11):
    """Quadrature of the expected rate and both continuous-update terms.

    Returns ``(rate, dmu, dSigma)`` where ``dmu = -E_f E_N[(x - mu) lambda]``
    and ``dSigma = -E_f E_N[((x - mu)(x - mu)^T - Sigma) lambda]`` per unit time.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    n = mean.size
    if isinstance(pop, Mixture):
        parts = [population_moments(mean, cov, c.sensor, c.population, rtol) for c in pop.components]
        rate = sum(c.weight * p[0] for c, p in zip(pop.components, parts))
        dmu = sum(c.weight * p[1] for c, p in zip(pop.components, parts))
        dcov = sum(c.weight * p[2] for c, p in zip(pop.components, parts))
        return rate, dmu, dcov
    L = np.linalg.cholesky(cov)
    Lp = np.linalg.cholesky(pop.cov) if isinstance(pop, GaussianPop) else None
    f = _moment_integrand(mean, cov, sensor, L, pop, Lp)
    lo, hi = _domain(mean, cov, sensor, pop)
    if lo.size == 1:
        vals = np.array([
            integrate.quad(lambda t, j=j: f(np.array([[t]]))[0, j], lo[0], hi[0],
                           epsabs=0, epsrel=rtol, limit=400, points=[0.0])[0]
            for j in range(1 + n + n * n)
        ])
    elif lo.size == 2:
        # some moment components vanish exactly, so a pure relative tolerance
        # is unattainable; scale an absolute floor by the (positive) rate
        rate = integrate.cubature(lambda p: f(p)[:, :1], lo, hi, rtol=rtol, atol=1e-300,
                                  max_subdivisions=100_000).estimate[0]
        floor = rtol * 1e-3 * rate * max(1.0, float(np.max(np.abs(cov))))
        res = integrate.cubature(f, lo, hi, rtol=rtol, atol=floor, max_subdivisions=100_000)
        vals = np.asarray(res.estimate)
    else:
        # adaptive cubature is too slow in three or more dimensions; the
        # integrand is entire, so a product Gauss rule converges spectrally
        prev = None
        for N in (40, 60, 90, 135, 200):
            pts, wts = _product_rule(mean, cov, sensor, pop, N)
            vals = wts @ f(pts)
            if prev is not None and np.all(np.abs(vals - prev) <= rtol * np.max(np.abs(vals))):
                break
            prev = vals
        else:
            raise RuntimeError("product rule did not converge")
    rate = float(vals[0])
    dmu = -vals[1:1 + n]
    dcov = -vals[1 + n:].reshape(n, n)
    return rate, dmu, 0.5 * (dcov + dcov.T)


def expected_rate_quad(mean, cov, sensor, theta, rtol=1e-11):
    return population_moments(mean, cov, sensor, Single(theta), rtol)[0]


def conjugate_update(mean, cov, H, R, theta):
    """Moments of N(x; mean, cov) * exp(-0.5 ||Hx - theta||_R^2), via precisions."""
    P = np.linalg.inv(cov) + H.T @ R @ H
    post_cov = np.linalg.inv(P)
    post_mean = post_cov @ (np.linalg.solve(cov, mean) + H.T @ R @ theta)
    return post_mean, 0.5 * (post_cov + post_cov.T)


def random_spd(rng, n, lo=0.3, hi=2.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return (Q * rng.uniform(lo, hi, size=n)) @ Q.T


def random_psd(rng, n, rank, lo=0.3, hi=3.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    d = np.zeros(n)
    d[:rank] = rng.uniform(lo, hi, size=rank)
    M = (Q * d) @ Q.T
    return 0.5 * (M + M.T)


def normal_cdf(x):
    return stats.norm.cdf(x)
