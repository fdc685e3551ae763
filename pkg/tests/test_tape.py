"""Self-checks for the tape oracle before it is trusted to judge backward().

The tape engine's graph propagation is validated against central finite
differences on smooth graphs; the spike node's surrogate insertion is checked
algebraically in isolation.
"""

import numpy as np
import pytest

import tape


def test_smooth_graph_matches_finite_differences():
    rng = np.random.default_rng(0)
    w0 = rng.normal(size=(3, 4))
    v0 = rng.normal(size=4)
    c = rng.normal(size=3)

    def loss_value(w_val, v_val):
        w, v = tape.leaf(w_val), tape.leaf(v_val)
        y = tape.matvec(w, v)
        s = tape.dot(tape.leaf(c), y)
        out = tape.mul(s, tape.exp(tape.neg(s)))
        tape.backprop(out)
        return float(out.value), w.grad, v.grad

    _, dw, dv = loss_value(w0, v0)

    h = 1e-6
    for idx in np.ndindex(w0.shape):
        wp, wm = w0.copy(), w0.copy()
        wp[idx] += h
        wm[idx] -= h
        num = (loss_value(wp, v0)[0] - loss_value(wm, v0)[0]) / (2 * h)
        assert num == pytest.approx(dw[idx], rel=1e-5, abs=1e-9)
    for i in range(v0.shape[0]):
        vp, vm = v0.copy(), v0.copy()
        vp[i] += h
        vm[i] -= h
        num = (loss_value(w0, vp)[0] - loss_value(w0, vm)[0]) / (2 * h)
        assert num == pytest.approx(dv[i], rel=1e-5, abs=1e-9)


def test_scalar_ops_against_finite_differences():
    def f(a_val, b_val):
        a, b = tape.leaf(np.float64(a_val)), tape.leaf(np.float64(b_val))
        out = tape.exp(tape.neg(tape.div(a, b)))  # exp(-a/b), the decay factor
        tape.backprop(out)
        return float(out.value), float(a.grad), float(b.grad)

    val, da, db = f(1.0, 20.0)
    h = 1e-7
    assert (f(1.0 + h, 20.0)[0] - f(1.0 - h, 20.0)[0]) / (2 * h) == pytest.approx(
        da, rel=1e-6
    )
    assert (f(1.0, 20.0 + h)[0] - f(1.0, 20.0 - h)[0]) / (2 * h) == pytest.approx(
        db, rel=1e-4
    )
    # d/d tau of exp(-dt/tau) = (dt/tau^2) exp(-dt/tau)
    assert db == pytest.approx((1.0 / 20.0**2) * np.exp(-1.0 / 20.0), rel=1e-12)


def test_spike_node_surrogate_insertion():
    u_val = np.array([-0.6, 0.35, 0.999, 1.0, 2.5])
    c = np.array([1.0, -2.0, 0.5, 3.0, 1.5])
    u = tape.leaf(u_val)
    u_th = tape.leaf(np.float64(1.0))
    n = tape.spike(u, u_th)
    loss = tape.dot(tape.leaf(c), n)
    tape.backprop(loss)
    hp = np.clip(u_val - 1.0 + 1.0, 0.0, 1.0)
    assert np.array_equal(n.value, np.array([0.0, 0.0, 0.0, 1.0, 1.0]))
    np.testing.assert_allclose(u.grad, c * hp, rtol=0, atol=0)
    assert float(u_th.grad) == pytest.approx(-float(np.sum(c * hp)))


def test_select_and_stack_route_gradients():
    v = tape.leaf(np.array([1.0, 2.0, 3.0]))
    picks = [tape.select(v, 2), tape.select(v, 0), tape.select(v, 2)]
    stacked = tape.stack(picks)
    loss = tape.dot(tape.leaf(np.array([10.0, 20.0, 1.0])), stacked)
    tape.backprop(loss)
    np.testing.assert_allclose(v.grad, [20.0, 0.0, 11.0])


def test_shared_node_gradient_accumulates():
    a = tape.leaf(np.float64(3.0))
    out = tape.mul(a, a)  # a^2, shared parent
    tape.backprop(out)
    assert float(a.grad) == pytest.approx(6.0)
