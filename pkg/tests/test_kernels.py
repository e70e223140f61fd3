import numpy as np
import pytest

from apnet.adaptive import (
    AdaptiveParams,
    AdaptiveState,
    adaptive_control,
    adaptive_integral_rate,
    integral_estimate_rate,
    state_estimate_rate,
    uncertainty_update_rate,
)
from apnet.graph import build_graph
from apnet.kernels import HAVE_COMPILED, numpy_backend, select_backend
from apnet.network import (
    ActivationMatrices,
    NetworkParams,
    NetworkState,
    integral_rate,
    nominal_control,
)


def make_setup(rng, n=5, channels=2, m_inputs=2, adaptive=(1.0, 1.0)):
    g = build_graph(n, [(1, 2), (2, 3), (3, 4), (4, 5), (1, 4), (2, 5)])
    net = [
        NetworkParams(a=1.0, k0=1.5, alpha=3.0, gamma=2.0, sigma=0.4,
                      beta=rng.uniform(0.1, 1.0, n), sensing_radius=3.0),
        NetworkParams(a=2.0, k0=2.5, alpha=1.5, gamma=4.0, sigma=0.2,
                      beta=rng.uniform(0.1, 1.0, n), sensing_radius=3.0),
    ][:channels]
    ad = [AdaptiveParams(gamma_rate=4.0, mu=1.2, delta_hat_max=3.0),
          AdaptiveParams(gamma_rate=2.0, mu=0.8, delta_hat_max=2.0, constant_mode=True)][:channels]
    shapes = dict(
        lap=np.ascontiguousarray(g.laplacian),
        bt=np.ascontiguousarray(g.incidence.T),
        pbl=np.ascontiguousarray(g.incidence.T @ g.laplacian_pinv),
        beta=np.ascontiguousarray(np.column_stack([p.beta for p in net])),
        a=np.array([p.a for p in net]),
        k0=np.array([p.k0 for p in net]),
        alpha=np.array([p.alpha for p in net]),
        gamma=np.array([p.gamma for p in net]),
        sigma=np.array([p.sigma for p in net]),
        gamma_rate=np.array([q.gamma_rate for q in ad]),
        mu=np.array([q.mu for q in ad]),
        dmax=np.array([q.delta_hat_max for q in ad]),
        nu=np.array([2 * q.delta_hat_max * q.nu_fraction for q in ad]),
        adaptive_mask=np.array(adaptive[:channels], dtype=float),
        project_mask=np.array([0.0 if q.constant_mode else 1.0 for q in ad]),
    )
    return g, net, ad, shapes


def random_states(rng, n, m, c):
    return dict(
        x=np.ascontiguousarray(rng.normal(size=(n, c))),
        p=np.ascontiguousarray(rng.normal(size=(n, c))),
        xh=np.ascontiguousarray(rng.normal(size=(n, c))),
        ph=np.ascontiguousarray(rng.normal(size=(n, c))),
        dh=np.ascontiguousarray(rng.uniform(-1.5, 1.5, size=(n, c))),
        z=np.ascontiguousarray(rng.normal(size=(m, c))),
        zh=np.ascontiguousarray(rng.normal(size=(m, c))),
    )


def random_stages(rng, s2, n, m_in, c):
    k2 = rng.uniform(0, 1, size=(s2, n, m_in))
    cs = rng.normal(size=(s2, m_in, c))
    ds = rng.normal(size=(s2, n, c)) * 0.5
    return np.ascontiguousarray(k2), np.ascontiguousarray(cs), np.ascontiguousarray(ds)


def test_rhs_matches_per_agent_reference():
    """The vectorized stage derivative equals the per-agent equations exactly."""
    rng = np.random.default_rng(17)
    g, net, ad, shapes = make_setup(rng)
    n, m, c = 5, g.edge_count, 2
    st = random_states(rng, n, m, c)
    k2s, css, dss = random_stages(rng, 1, n, 2, c)
    k2, cs, ds = k2s[0], css[0], dss[0]
    derivs = numpy_backend.channel_rhs(
        st["x"], st["p"], st["xh"], st["ph"], st["dh"], st["z"], st["zh"],
        shapes["lap"], shapes["bt"], shapes["pbl"], shapes["beta"],
        shapes["a"], shapes["k0"], shapes["alpha"], shapes["gamma"], shapes["sigma"],
        shapes["gamma_rate"], shapes["mu"], shapes["dmax"], shapes["nu"],
        shapes["adaptive_mask"], shapes["project_mask"],
        k2, k2.sum(axis=1)[:, None], cs, ds,
    )
    dx, dp, dxh, dph, ddh, dz, dzh = derivs

    for j in range(c):
        params = net[j]
        apar = ad[j]
        x = st["x"][:, j]
        xt = x + ds[:, j]
        cpad = np.zeros(n)
        cpad[:2] = 0.0  # values enter through K2 @ c directly
        act = ActivationMatrices(k1=k2.sum(axis=1), K2=np.column_stack([k2, np.zeros((n, n - 2))]))
        cvec = np.concatenate([cs[:, j], np.zeros(n - 2)])
        netstate = NetworkState(x=x, p=st["p"][:, j], t=0.0)
        adstate = AdaptiveState(delta_hat=st["dh"][:, j], x_hat=st["xh"][:, j],
                                p_hat=st["ph"][:, j])
        bounds = apar.bounds(n)
        for i in range(n):
            u = adaptive_control(i, xt, adstate, netstate, g, act, cvec, params)
            assert dx[i, j] == pytest.approx(params.a * x[i] + u, abs=1e-12)
            assert dp[i, j] == pytest.approx(
                adaptive_integral_rate(i, xt, adstate, netstate, g, params), abs=1e-12
            )
            e_x_i = xt[i] - adstate.x_hat[i] - adstate.delta_hat[i]
            assert ddh[i, j] == pytest.approx(
                uncertainty_update_rate(i, e_x_i, adstate.delta_hat[i], apar, params.a, bounds),
                abs=1e-12,
            )
            assert dxh[i, j] == pytest.approx(
                state_estimate_rate(i, xt, adstate, g, act, cvec, params, apar), abs=1e-12
            )
            assert dph[i, j] == pytest.approx(
                integral_estimate_rate(i, adstate, g, params), abs=1e-12
            )
        # edge filters
        w = params.gamma * g.laplacian @ adstate.delta_hat
        dz_ref = (-params.gamma * (g.incidence.T @ xt + params.sigma * st["z"][:, j])
                  + shapes["pbl"] @ w)
        dzh_ref = -params.gamma * (g.incidence.T @ adstate.x_hat + params.sigma * st["zh"][:, j])
        assert np.abs(dz[:, j] - dz_ref).max() < 1e-12
        assert np.abs(dzh[:, j] - dzh_ref).max() < 1e-12


def test_nominal_channel_reduces_to_uncorrupted_loop():
    """adaptive_mask 0 with zero estimator states reproduces the nominal equations."""
    rng = np.random.default_rng(23)
    g, net, ad, shapes = make_setup(rng, adaptive=(0.0, 0.0))
    n, m, c = 5, g.edge_count, 2
    st = random_states(rng, n, m, c)
    for key in ("xh", "ph", "dh", "zh"):
        st[key][:] = 0.0
    k2s, css, dss = random_stages(rng, 1, n, 2, c)
    dss[:] = 0.0
    k2, cs = k2s[0], css[0]
    dx, dp, dxh, dph, ddh, dz, dzh = numpy_backend.channel_rhs(
        st["x"], st["p"], st["xh"], st["ph"], st["dh"], st["z"], st["zh"],
        shapes["lap"], shapes["bt"], shapes["pbl"], shapes["beta"],
        shapes["a"], shapes["k0"], shapes["alpha"], shapes["gamma"], shapes["sigma"],
        shapes["gamma_rate"], shapes["mu"], shapes["dmax"], shapes["nu"],
        shapes["adaptive_mask"], shapes["project_mask"],
        k2, k2.sum(axis=1)[:, None], cs, dss[0],
    )
    assert np.all(dxh == 0.0) and np.all(dph == 0.0) and np.all(ddh == 0.0)
    assert np.all(dzh == 0.0)
    for j in range(c):
        params = net[j]
        act = ActivationMatrices(k1=k2.sum(axis=1), K2=np.column_stack([k2, np.zeros((n, n - 2))]))
        cvec = np.concatenate([cs[:, j], np.zeros(n - 2)])
        netstate = NetworkState(x=st["x"][:, j], p=st["p"][:, j], t=0.0)
        for i in range(n):
            u = nominal_control(i, netstate, g, act, cvec, params)
            assert dx[i, j] == pytest.approx(params.a * st["x"][i, j] + u, abs=1e-12)
            assert dp[i, j] == pytest.approx(integral_rate(i, netstate, g, params), abs=1e-12)


@pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernel not built")
def test_compiled_matches_numpy_backend():
    rng = np.random.default_rng(31)
    g, net, ad, shapes = make_setup(rng)
    n, m, c = 5, g.edge_count, 2
    steps = 400
    k2s, css, dss = random_stages(rng, 2 * steps + 1, n, 2, c)
    states_np = random_states(rng, n, m, c)
    states_cy = {k: v.copy() for k, v in states_np.items()}
    args = (
        shapes["lap"], shapes["bt"], shapes["pbl"], shapes["beta"],
        shapes["a"], shapes["k0"], shapes["alpha"], shapes["gamma"], shapes["sigma"],
        shapes["gamma_rate"], shapes["mu"], shapes["dmax"], shapes["nu"],
        shapes["adaptive_mask"], shapes["project_mask"],
        k2s, css, dss, 1e-3, steps,
    )
    _, numpy_advance = select_backend("numpy")
    _, compiled_advance = select_backend("compiled")
    numpy_advance(*(list(states_np.values()) + list(args)))
    compiled_advance(*(list(states_cy.values()) + list(args)))
    for key in states_np:
        scale = max(1.0, np.abs(states_np[key]).max())
        assert np.abs(states_np[key] - states_cy[key]).max() / scale < 1e-9, key


def test_projection_clamp_in_advance():
    """Estimates never leave the hypercube across a long advance."""
    rng = np.random.default_rng(37)
    g, net, ad, shapes = make_setup(rng)
    n, m, c = 5, g.edge_count, 2
    steps = 1500
    k2s, css, dss = random_stages(rng, 2 * steps + 1, n, 2, c)
    dss *= 10.0  # violent corruption to stress the bound
    st = random_states(rng, n, m, c)
    st["dh"][:] = 0.0
    _, advance = select_backend("numpy")
    advance(*(list(st.values()) + [
        shapes["lap"], shapes["bt"], shapes["pbl"], shapes["beta"],
        shapes["a"], shapes["k0"], shapes["alpha"], shapes["gamma"], shapes["sigma"],
        shapes["gamma_rate"], shapes["mu"], shapes["dmax"], shapes["nu"],
        shapes["adaptive_mask"], shapes["project_mask"],
        k2s, css, dss, 1e-3, steps,
    ]))
    # channel 0 uses the projection law: hard bound holds
    assert np.abs(st["dh"][:, 0]).max() <= shapes["dmax"][0] + 1e-9
