"""Discontinuous Galerkin time stepping for the penalized biharmonic flow.

Each interval carries a degree-r polynomial in the Lagrange basis at
right Gauss-Radau points, so the value at the right endpoint is a nodal
coefficient and no extrapolation is needed.  The transient solve is an
interval-by-interval forward sweep: interval m couples to the past only
through the gradient inner product with the outgoing value at t_{m-1},
seeded at m=1 by the H1_0 projection of the initial datum.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .fem import (FeFunction, assemble_load_scalar, h1_projection,
                  load_provider, _static)
from .linalg import Factorized
from .quadrature import interval_rule

__all__ = ["TimePartition", "make_partition", "radau_points", "TimeBasis",
           "DgSolution", "dg_solve", "time_projection_values",
           "stability_functional", "stability_data_norm",
           "best_approx_terms", "bh_primal", "bh_dual", "bh_analytic"]


@dataclass(frozen=True)
class TimePartition:
    """Strictly increasing nodes 0 = t_0 < ... < t_M = T."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("need at least one interval")
        if nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0.0):
            raise ValueError("nodes must increase strictly from 0")
        object.__setattr__(self, "nodes", nodes)
        nodes.setflags(write=False)

    @property
    def num_intervals(self):
        return self.nodes.size - 1

    @property
    def lengths(self):
        return np.diff(self.nodes)

    @property
    def k_max(self):
        return float(self.lengths.max())

    @property
    def end_time(self):
        return float(self.nodes[-1])


def make_partition(num_intervals, end_time=1.0):
    """Uniform partition of (0, T] into M intervals."""
    if num_intervals < 1:
        raise ValueError("need at least one interval")
    if end_time <= 0.0:
        raise ValueError("end time must be positive")
    return TimePartition(np.linspace(0.0, end_time, num_intervals + 1))


@lru_cache(maxsize=None)
def radau_points(order):
    """Right Gauss-Radau points on (0, 1], the last one equal to 1."""
    if order < 0:
        raise ValueError("order must be nonnegative")
    s = order + 1
    if s == 1:
        pts = np.array([1.0])
    else:
        # interior nodes: roots of (P_s - P_{s-1}) / (x - 1) on [-1, 1]
        leg = np.polynomial.legendre
        coef = leg.legsub([0.0] * (s - 1) + [0.0, 1.0],
                          [0.0] * (s - 1) + [1.0])
        poly = np.polynomial.Polynomial(leg.leg2poly(coef))
        quotient = poly // np.polynomial.Polynomial([-1.0, 1.0])
        roots = np.sort(quotient.roots().real)
        pts = np.concatenate([0.5 * (roots + 1.0), [1.0]])
    pts.setflags(write=False)
    return pts


class TimeBasis:
    """Lagrange polynomials at the right Radau points of [0, 1]."""

    def __init__(self, order):
        self.order = order
        self.nodes = radau_points(order)
        n = order + 1
        vand = np.vander(self.nodes, n, increasing=True)
        self.coef = np.linalg.inv(vand)  # column a: monomials of ell_a
        dcoef = self.coef[1:] * np.arange(1, n)[:, None]
        self.dcoef = np.vstack([dcoef, np.zeros((1, n))])
        self.left_values = self.values(0.0)

    def values(self, tau):
        tau = np.asarray(tau, dtype=float)
        powers = np.vander(np.atleast_1d(tau), self.order + 1, increasing=True)
        out = powers @ self.coef
        return out[0] if tau.ndim == 0 else out

    def derivatives(self, tau):
        tau = np.asarray(tau, dtype=float)
        powers = np.vander(np.atleast_1d(tau), self.order + 1, increasing=True)
        out = powers @ self.dcoef
        return out[0] if tau.ndim == 0 else out

    def gram(self, da=0, db=0):
        """G[b, a] = int_0^1 ell_a^(da) ell_b^(db) d tau."""
        rule = interval_rule(self.order + 2)
        fa = self.derivatives(rule.points) if da else self.values(rule.points)
        fb = self.derivatives(rule.points) if db else self.values(rule.points)
        return np.einsum("q,qa,qb->ba", rule.weights, fa, fb)


class DgSolution:
    """Per-interval coefficient blocks of a dG(r) trajectory."""

    def __init__(self, partition, space, order, coefficients):
        self.partition = partition
        self.space = space
        self.order = order
        self.basis = TimeBasis(order)
        self.coefficients = coefficients  # (M, r+1, n_dofs)

    def value_minus(self, m):
        """Outgoing value at t_{m+1} taken from interval index m (0-based)."""
        return self.coefficients[m, -1]

    def value_plus(self, m):
        """Incoming value at t_m^+ taken from interval index m (0-based)."""
        return self.basis.left_values @ self.coefficients[m]

    def value_at(self, m, t):
        t0 = self.partition.nodes[m]
        km = self.partition.lengths[m]
        return self.basis.values((t - t0) / km) @ self.coefficients[m]

    def as_fefunction(self, m, t):
        return FeFunction(self.space, self.value_at(m, t))


def _initial_coefficients(space, psi0):
    if psi0 is None:
        return np.zeros(space.n_dofs)
    return h1_projection(space, psi0).coefficients


def dg_solve(form, partition, order, f=None, psi0=None, load_points=None,
             load_rule=None, rtol=1e-10):
    """Forward sweep for the fully discrete transient problem.

    Parameters
    ----------
    form : CipForm
    partition : TimePartition
    order : int
        Polynomial degree r >= 0 in time.
    f : field, callable or None
        Scalar data; fields are expanded into one precomputed load per
        separable term, a callable t -> full load vector is used as
        given, None means a vanishing right-hand side.
    psi0 : FeFunction, field or None
        Initial datum, entering through its H1_0 projection.
    load_points : int, optional
        Gauss points per interval for the data integral (default r+2).
    load_rule : QuadratureRule, optional
        Space rule for the data loads (default: the data rule).
    """
    space = form.space
    free = space.free_dofs
    basis = TimeBasis(order)
    k_free = space.h1_free()
    a_free = form.matrix_free

    if f is None:
        load = None
    elif hasattr(f, "terms") or hasattr(f, "value"):
        load = load_provider(space, f, rule=load_rule)
    else:
        load = f

    rule = interval_rule(load_points or (order + 2))
    coupling = basis.gram(da=1) + np.outer(basis.left_values,
                                           basis.left_values)
    mass = basis.gram()

    u_prev = _initial_coefficients(space, psi0)[free]
    lengths = partition.lengths
    uniform = np.allclose(lengths, lengths[0], rtol=1e-12, atol=0.0)
    nb = order + 1
    coeffs = np.zeros((partition.num_intervals, nb, space.n_dofs))

    factor = None
    for m in range(partition.num_intervals):
        km = lengths[m]
        if factor is None or not uniform:
            if order == 0:
                system = (k_free + km * a_free).tocsr()
            else:
                system = (sp.kron(sp.csr_matrix(coupling), k_free)
                          + sp.kron(sp.csr_matrix(km * mass), a_free)).tocsr()
            try:
                factor = Factorized(system, rtol=rtol)
            except Exception as exc:
                raise type(exc)(f"interval {m + 1}: {exc}") from exc

        rhs = np.zeros((nb, free.size))
        if load is not None:
            t0 = partition.nodes[m]
            for tau, wq in zip(rule.points, rule.weights):
                bvec = load(t0 + km * tau)[free]
                rhs += (wq * km) * np.outer(basis.values(tau), bvec)
        rhs += np.outer(basis.left_values, k_free @ u_prev)

        try:
            block = factor(rhs.ravel()).reshape(nb, free.size)
        except Exception as exc:
            raise type(exc)(f"interval {m + 1}: {exc}") from exc
        coeffs[m][:, free] = block
        u_prev = block[-1]

    return DgSolution(partition, space, order, coeffs)


def time_projection_values(order, partition, fn, samples=12):
    """Interval-wise polynomial projection of a scalar function of time.

    Matches the right endpoint on every interval and, for r >= 1, the
    moments against polynomials of degree < r.  Returns the nodal
    values at the right Radau points, shape (M, r+1); polynomials of
    degree <= r are reproduced exactly.
    """
    basis = TimeBasis(order)
    nodes = partition.nodes
    out = np.zeros((partition.num_intervals, order + 1))
    if order == 0:
        out[:, 0] = [fn(t) for t in nodes[1:]]
        return out

    rule = interval_rule(max(samples, order + 2))
    powers = np.vander(rule.points, order, increasing=True)   # (Q, r)
    lvals = basis.values(rule.points)                         # (Q, r+1)
    gmat = np.einsum("q,qj,qa->ja", rule.weights, powers, lvals)
    for m in range(partition.num_intervals):
        t0, t1 = nodes[m], nodes[m + 1]
        km = t1 - t0
        fvals = np.array([fn(t0 + km * tau) for tau in rule.points])
        moments = np.einsum("q,qj,q->j", rule.weights, powers, fvals)
        right = fn(t1)
        out[m, :-1] = np.linalg.solve(gmat[:, :-1],
                                      moments - gmat[:, -1] * right)
        out[m, -1] = right
    return out


def stability_functional(sol, form, psi0=None):
    """Energy diagnostics (S1, S2, S3) of a dG trajectory.

    S1 sums the squared gradient norms of the time derivative, S2
    integrates the lifted operator action, S3 accumulates the jumps
    scaled by 1/k_m, the first jump taken against the projected initial
    datum.  S1 vanishes identically for r = 0.
    """
    space = sol.space
    free = space.free_dofs
    k_free = space.h1_free()
    a_free = form.matrix_free
    k_factor = space.h1_factor()
    basis = sol.basis
    mass = basis.gram()
    dgram = basis.gram(da=1, db=1)
    lengths = sol.partition.lengths

    s1 = s2 = s3 = 0.0
    u_prev = _initial_coefficients(space, psi0)[free]
    for m in range(sol.partition.num_intervals):
        km = lengths[m]
        block = sol.coefficients[m][:, free]
        if sol.order > 0:
            kb = (k_free @ block.T).T
            s1 += float(np.einsum("ba,af,bf->", dgram, block, kb)) / km
        lifted = np.array([k_factor(a_free @ ba) for ba in block])
        klift = (k_free @ lifted.T).T
        s2 += km * float(np.einsum("ba,af,bf->", mass, lifted, klift))
        jump = basis.left_values @ block - u_prev
        s3 += float(jump @ (k_free @ jump)) / km
        u_prev = block[-1]
    return s1, s2, s3


def stability_data_norm(form, f, partition, psi0=None, time_points=8):
    """Squared data norm bounding the stability functional.

    The functional data is rewritten in gradient form term by term: the
    spatial factor w_i of each separable term is lifted to g_i with
    (grad g_i, grad v) = <w_i, v> for all discrete v, which leaves the
    discrete trajectory unchanged.  Returns
    ||grad g||^2_{I x Omega} + |||P_h psi0|||_h^2.
    """
    space = form.space
    free = space.free_dofs
    k_free = space.h1_free()

    lifts = []
    factors = []
    for tf, term in f.terms:
        b = assemble_load_scalar(space, _static(term))[free]
        lifts.append(space.h1_factor()(b))
        factors.append(tf)
    gram = np.array([[gi @ (k_free @ gj) for gj in lifts] for gi in lifts])

    rule = interval_rule(time_points)
    total = 0.0
    for m in range(partition.num_intervals):
        t0 = partition.nodes[m]
        km = partition.lengths[m]
        for tau, wq in zip(rule.points, rule.weights):
            sig = np.array([tf.fn(t0 + km * tau) for tf in factors])
            total += wq * km * float(sig @ gram @ sig)

    if psi0 is not None:
        from .cip import triple_norm
        total += triple_norm(form, h1_projection(space, psi0)) ** 2
    return total


def best_approx_terms(psi, space, form, partition, order, time_points=5,
                      rule=None):
    """The three projection errors of the best-approximation bound.

    Returns (E_chi, E_Rh, E_pik): the gradient-norm distances of the
    exact field to its combined space-time comparator (the H1_0
    projection composed with the interval-wise time projection), to its
    energy-form projection, and to its time projection.  Separable
    structure is exploited: each spatial factor is projected once.
    """
    from .cip import ritz_projection

    rule = rule or space.default_data_rule()
    trule = interval_rule(time_points)
    basis = TimeBasis(order)
    pts = space.phys_points(rule)
    grads = space.basis_gradients(rule)
    det = space.jac_det
    w = rule.weights

    exact = []
    ritz = []
    h1p = []
    pik = []
    factors = []
    for tf, term in psi.terms:
        exact.append(term.grad(pts))
        static = _StaticScalarField(term, clamped=psi.clamped)
        rw = ritz_projection(form, static)
        pw = h1_projection(space, static, rule=rule)
        ritz.append(np.einsum("fqli,fl->fqi", grads,
                              rw.coefficients[space.dof_map]))
        h1p.append(np.einsum("fqli,fl->fqi", grads,
                             pw.coefficients[space.dof_map]))
        pik.append(time_projection_values(order, partition, tf.fn))
        factors.append(tf)

    e_chi = e_rh = e_pik = 0.0
    for m in range(partition.num_intervals):
        t0 = partition.nodes[m]
        km = partition.lengths[m]
        for tau, wq in zip(trule.points, trule.weights):
            t = t0 + km * tau
            lv = basis.values(tau)
            d_chi = np.zeros_like(exact[0])
            d_rh = np.zeros_like(exact[0])
            d_pik = np.zeros_like(exact[0])
            for i, tf in enumerate(factors):
                sig = tf.fn(t)
                psig = float(lv @ pik[i][m])
                d_chi += sig * exact[i] - psig * h1p[i]
                d_rh += sig * (exact[i] - ritz[i])
                d_pik += (sig - psig) * exact[i]
            scale = wq * km
            e_chi += scale * np.einsum("q,fqi,fqi,f->", w, d_chi, d_chi, det)
            e_rh += scale * np.einsum("q,fqi,fqi,f->", w, d_rh, d_rh, det)
            e_pik += scale * np.einsum("q,fqi,fqi,f->", w, d_pik, d_pik, det)
    return (float(np.sqrt(max(e_chi, 0.0))),
            float(np.sqrt(max(e_rh, 0.0))),
            float(np.sqrt(max(e_pik, 0.0))))


class _StaticScalarField:
    """One spatial factor viewed as a time-independent field."""

    def __init__(self, term, clamped=False):
        self.terms = ((_ONE, term),)
        self.clamped = clamped
        self._term = term

    def value(self, t, x):
        return self._term.value(x)

    def grad(self, t, x):
        return self._term.grad(x)

    def hess(self, t, x):
        return self._term.hess(x)


class _One:
    fn = staticmethod(lambda t: 1.0)
    dfn = staticmethod(lambda t: 0.0)


_ONE = _One()


# -- the space-time bilinear form on coefficient blocks -----------------


def bh_primal(form, partition, order, ucoef, vcoef):
    """Space-time form in its forward shape on coefficient blocks.

    Both arguments have shape (M, r+1, n_dofs).  The initial term pairs
    the incoming values at t_0; the jump terms couple each interval to
    the previous one.
    """
    space = form.space
    k = space.h1_stiffness()
    a = form.matrix
    basis = TimeBasis(order)
    g10 = basis.gram(da=1)
    mass = basis.gram()
    left = basis.left_values
    lengths = partition.lengths

    total = 0.0
    for m in range(partition.num_intervals):
        ub = ucoef[m]
        vb = vcoef[m]
        ku = (k @ ub.T).T
        au = (a @ ub.T).T
        total += float(np.einsum("ba,af,bf->", g10, ku, vb))
        total += lengths[m] * float(np.einsum("ba,af,bf->", mass, au, vb))
        v_plus = left @ vb
        u_plus = left @ ub
        if m == 0:
            total += float(u_plus @ (k @ v_plus))
        else:
            jump = u_plus - ucoef[m - 1][-1]
            total += float(jump @ (k @ v_plus))
    return total


def bh_dual(form, partition, order, ucoef, vcoef):
    """Space-time form in its backward shape (integrated by parts)."""
    space = form.space
    k = space.h1_stiffness()
    a = form.matrix
    basis = TimeBasis(order)
    g01 = basis.gram(db=1)
    mass = basis.gram()
    left = basis.left_values
    lengths = partition.lengths
    m_count = partition.num_intervals

    total = 0.0
    for m in range(m_count):
        ub = ucoef[m]
        vb = vcoef[m]
        ku = (k @ ub.T).T
        au = (a @ ub.T).T
        total -= float(np.einsum("ba,af,bf->", g01, ku, vb))
        total += lengths[m] * float(np.einsum("ba,af,bf->", mass, au, vb))
        u_minus = ub[-1]
        if m < m_count - 1:
            jump = left @ vcoef[m + 1] - vb[-1]
            total -= float(u_minus @ (k @ jump))
        else:
            total += float(u_minus @ (k @ vb[-1]))
    return total


def bh_analytic(form, psi, partition, order, vcoef, time_points=8,
                volume_rule=None, edge_points=8):
    """Space-time form applied to a smooth clamped field against blocks.

    Realizes the extension of the form to continuous-in-time arguments:
    the field's jumps vanish, its elliptic pairing is the consistency
    pairing, and the initial term pairs the field at t = 0.
    """
    from .cip import consistency_pairing
    from .fem import assemble_load_gradient

    space = form.space
    basis = TimeBasis(order)
    rule = interval_rule(time_points)

    gloads = []
    cpairs = []
    factors = []
    for tf, term in psi.terms:
        static = _StaticScalarField(term, clamped=psi.clamped)
        gloads.append(assemble_load_gradient(space, static,
                                             rule=volume_rule))
        cpairs.append(consistency_pairing(form, static,
                                          volume_rule=volume_rule,
                                          edge_points=edge_points))
        factors.append(tf)

    total = 0.0
    for m in range(partition.num_intervals):
        t0 = partition.nodes[m]
        km = partition.lengths[m]
        vb = vcoef[m]
        for tau, wq in zip(rule.points, rule.weights):
            t = t0 + km * tau
            vvec = basis.values(tau) @ vb
            row = np.zeros(space.n_dofs)
            for tf, gl, cp in zip(factors, gloads, cpairs):
                row += tf.dfn(t) * gl + tf.fn(t) * cp
            total += wq * km * float(row @ vvec)
    v_plus0 = basis.left_values @ vcoef[0]
    psi0_row = np.zeros(space.n_dofs)
    for tf, gl in zip(factors, gloads):
        psi0_row += tf.fn(0.0) * gl
    total += float(psi0_row @ v_plus0)
    return total
