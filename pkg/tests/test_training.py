import math

import numpy as np
import pytest

from polyflow.datasets import (LabeledLatentSet, SpiralSpec, derangement_pairing,
                               make_spiral_dataset, spiral_distance)
from polyflow.flow import IntegratorConfig, Trajectory, TwoStageResult
from polyflow.metrics import monotonicity_error
from polyflow.omega import spiral_config
from polyflow.training import (AdamState, AutoencoderTrainConfig, ClassifierTrainConfig,
                               PlateauScheduler, RmspropState, SpiralLossConfig,
                               build_autoencoder_field, classifier_inputs, loss_mse,
                               loss_spiral, train_autoencoder, train_classifier)


def fake_two_stage(states_t0, finals, t0=0.25, steps=4):
    """Minimal TwoStageResult carrying prescribed interior/final states."""
    B, D = finals.shape
    h = 0.5 / steps
    idx = int(round(t0 / h))
    s1 = np.zeros((steps + 1, B, D))
    s1[idx] = states_t0
    s2 = np.zeros((steps + 1, B, D))
    s2[-1] = finals
    t1 = h * np.arange(steps + 1)
    return TwoStageResult(s1[-1], finals, Trajectory(t1, s1), Trajectory(0.5 + t1, s2), 0.0)


class TestLossMse:
    def test_identical_is_zero(self):
        x = np.random.default_rng(0).normal(size=(6, 4))
        val, cot = loss_mse(x, x)
        assert val == 0.0 and np.all(cot == 0.0)

    def test_single_offset(self):
        f = np.zeros((1, 4))
        t = np.zeros((1, 4))
        f[0, 2] = 0.3
        val, cot = loss_mse(f, t)
        assert val == pytest.approx(0.09, rel=1e-12)
        assert cot[0, 2] == pytest.approx(0.6, rel=1e-12)

    def test_random_batch_matches_naive(self):
        rng = np.random.default_rng(1)
        f, t = rng.normal(size=(9, 4)), rng.normal(size=(9, 4))
        val, _ = loss_mse(f, t)
        naive = sum(float(np.sum((f[i] - t[i]) ** 2)) for i in range(9)) / 9
        assert val == pytest.approx(naive, rel=1e-12)


class TestLossSpiral:
    CFG = SpiralLossConfig(lam=20.0, t0=0.25, c_d=2.0)

    def test_perfect_configuration_is_zero(self):
        # targets hit, transverse anchor reached, exactly c_d-isometric
        B = 4
        finals = np.tile([8.0, 0.0, 1.0, 2.0], (B, 1))
        finals[:, 1] = np.arange(B)
        targets = finals.copy()
        states_t0 = np.zeros((B, 4))
        states_t0[:, 2:] = 1.0
        states_t0[:, 1] = np.arange(B) * 3.0  # spacing 3 in the parallel slot
        pairing = np.array([1, 0, 3, 2])
        dists = self.CFG.c_d * np.abs(states_t0[:, 1] - states_t0[pairing, 1])
        res = fake_two_stage(states_t0, finals)
        total, parts, cot_f, extras = loss_spiral(res, targets, dists, pairing, self.CFG)
        assert total == 0.0
        assert parts == {"L1": 0.0, "L2": 0.0, "L3": 0.0}
        assert np.all(cot_f == 0.0)

    def test_two_point_hand_value(self):
        finals = np.array([[8.0, 1.0, 0.5, 0.0], [8.0, -1.0, 0.0, 0.25]])
        targets = np.array([[8.0, 1.0, 0.0, 0.0], [8.0, -1.0, 0.0, 0.0]])
        states_t0 = np.array([[-3.25, 2.0, 1.0, 0.5], [-3.25, -2.0, 0.5, 1.0]])
        pairing = np.array([1, 0])
        dists = np.array([7.0, 7.0])
        res = fake_two_stage(states_t0, finals)
        total, parts, _, _ = loss_spiral(res, targets, dists, pairing, self.CFG)
        l1 = (0.5**2 + 0.25**2) / 2
        l2 = ((0.0 + 0.5**2) + (0.5**2 + 0.0)) / 2
        l3 = (abs(7.0 - 2.0 * 4.0) + abs(7.0 - 2.0 * 4.0)) / 2
        assert parts["L1"] == pytest.approx(l1, rel=1e-12)
        assert parts["L2"] == pytest.approx(l2, rel=1e-12)
        assert parts["L3"] == pytest.approx(l3, rel=1e-12)
        assert total == pytest.approx(l1 + 20.0 * (l2 + l3), rel=1e-12)

    def test_lambda_zero_reduces_to_mse(self):
        rng = np.random.default_rng(2)
        finals = rng.normal(size=(5, 4))
        targets = rng.normal(size=(5, 4))
        states_t0 = rng.normal(size=(5, 4))
        pairing = derangement_pairing(5, 1)
        dists = np.abs(rng.normal(size=5))
        cfg = SpiralLossConfig(lam=0.0, t0=0.25, c_d=2.0)
        res = fake_two_stage(states_t0, finals)
        total, parts, _, _ = loss_spiral(res, targets, dists, pairing, cfg)
        assert total == pytest.approx(loss_mse(finals, targets)[0], rel=1e-12)

    def test_cotangents_match_finite_differences(self):
        rng = np.random.default_rng(3)
        B = 5
        finals = rng.normal(size=(B, 4))
        targets = rng.normal(size=(B, 4))
        states_t0 = rng.normal(size=(B, 4)) * 2.0
        pairing = derangement_pairing(B, 2)
        dists = np.abs(rng.normal(size=B)) + 5.0  # keep |.| away from its kink
        cfg = self.CFG

        def total_of(st0, fin):
            res = fake_two_stage(st0, fin)
            return loss_spiral(res, targets, dists, pairing, cfg)[0]

        res = fake_two_stage(states_t0, finals)
        _, _, cot_f, extras = loss_spiral(res, targets, dists, pairing, cfg)
        (idx, cot_t0), = extras.items()
        eps = 1e-6
        for i in range(B):
            for j in range(4):
                up, dn = finals.copy(), finals.copy()
                up[i, j] += eps
                dn[i, j] -= eps
                fd = (total_of(states_t0, up) - total_of(states_t0, dn)) / (2 * eps)
                assert cot_f[i, j] == pytest.approx(fd, rel=1e-6, abs=1e-9)
                up, dn = states_t0.copy(), states_t0.copy()
                up[i, j] += eps
                dn[i, j] -= eps
                fd = (total_of(up, finals) - total_of(dn, finals)) / (2 * eps)
                assert cot_t0[i, j] == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_pair_swap_leaves_summand_unchanged(self):
        # the isometry penalty of a pair is symmetric in its two members
        c_d = 2.0
        d, xa, xb = 7.0, 1.3, -0.4
        term_ab = abs(d - c_d * abs(xa - xb))
        term_ba = abs(d - c_d * abs(xb - xa))
        assert term_ab == term_ba

    def test_mismatched_pairing_rejected(self):
        res = fake_two_stage(np.zeros((3, 4)), np.zeros((3, 4)))
        with pytest.raises(ValueError):
            loss_spiral(res, np.zeros((3, 4)), np.zeros(2), np.array([1, 0]), self.CFG)


class TestRmsprop:
    def test_zero_gradient_no_change(self):
        st = RmspropState(lr=0.01)
        p = np.array([1.0, -2.0])
        assert np.array_equal(st.step(p, np.zeros(2)), p)

    def test_first_scalar_step_hand_value(self):
        st = RmspropState(lr=0.01, alpha=0.99, momentum=0.3, eps=1e-8)
        g = 2.0
        p = st.step(np.array([5.0]), np.array([g]))
        buf = g / math.sqrt(0.01 * g * g + 1e-8)
        assert p[0] == pytest.approx(5.0 - 0.01 * buf, rel=1e-14)
        # magnitude is about lr / sqrt(1 - alpha)
        assert abs(5.0 - p[0]) == pytest.approx(0.01 / math.sqrt(0.01), rel=1e-6)

    def test_two_hand_iterated_steps(self):
        lr, alpha, mu, eps = 0.05, 0.9, 0.3, 1e-8
        st = RmspropState(lr=lr, alpha=alpha, momentum=mu, eps=eps)
        p, v, buf = 1.0, 0.0, 0.0
        ps = np.array([p])
        for g in (0.7, -0.2):
            v = alpha * v + (1 - alpha) * g * g
            buf = mu * buf + g / math.sqrt(v + eps)
            p = p - lr * buf
            ps = st.step(ps, np.array([g]))
            assert ps[0] == pytest.approx(p, abs=1e-12)

    def test_shape_mismatch(self):
        st = RmspropState()
        with pytest.raises(ValueError):
            st.step(np.zeros(3), np.zeros(2))


class TestAdam:
    def test_first_step_is_about_lr(self):
        for g in (0.003, -4.0, 11.0):
            st = AdamState(lr=0.01)
            p = st.step(np.array([0.0]), np.array([g]))
            assert abs(p[0]) == pytest.approx(0.01, rel=1e-3)
            assert np.sign(p[0]) == -np.sign(g)

    def test_zero_gradient_forever(self):
        st = AdamState(lr=0.01)
        p = np.array([3.0])
        for _ in range(10):
            p = st.step(p, np.zeros(1))
        assert p[0] == 3.0

    def test_three_hand_iterated_steps(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        st = AdamState(lr=lr)
        p, m, v = 0.5, 0.0, 0.0
        ps = np.array([p])
        for t, g in enumerate((1.0, -0.3, 0.05), start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mh = m / (1 - b1**t)
            vh = v / (1 - b2**t)
            p = p - lr * mh / (math.sqrt(vh) + eps)
            ps = st.step(ps, np.array([g]))
            assert ps[0] == pytest.approx(p, abs=1e-12)


class TestPlateauScheduler:
    def test_decreasing_losses_keep_lr(self):
        sched = PlateauScheduler()
        lr = 1.0
        for loss in np.linspace(10.0, 1.0, 50):
            lr = sched.update(lr, loss)
        assert lr == 1.0

    def test_constant_loss_21_epochs_one_reduction(self):
        sched = PlateauScheduler(patience=20, factor=0.8)
        lr = 1.0
        lrs = []
        for _ in range(21):
            lr = sched.update(lr, 5.0)
            lrs.append(lr)
        assert lrs[-1] == pytest.approx(0.8)
        assert all(x == 1.0 for x in lrs[:-1])

    def test_improvement_resets_counter(self):
        sched = PlateauScheduler(patience=20, factor=0.8)
        lr = 1.0
        for epoch in range(1, 22):
            loss = 4.0 if epoch == 20 else 5.0  # improvement at epoch 20
            lr = sched.update(lr, loss)
        assert lr == 1.0


SMOKE_CFG = AutoencoderTrainConfig(width=16, seed=0, lr=2e-3, epochs=200)


@pytest.fixture(scope="module")
def smoke_run():
    ds = make_spiral_dataset(SpiralSpec(1.0), spiral_config(), seed=0, cap=50)
    return ds, train_autoencoder("spiral", ds, SMOKE_CFG)


class TestTrainAutoencoder:
    def test_smoke_run_reduces_loss(self, smoke_run):
        _, art = smoke_run
        assert art.metrics[-1]["train_loss"] < art.metrics[0]["train_loss"]

    def test_epoch0_loss_matches_analytic_unactuated_flow(self):
        ds = make_spiral_dataset(SpiralSpec(1.0), spiral_config(), seed=0, cap=40)
        cfg = AutoencoderTrainConfig(width=16, seed=0, init_sigma=0.0, epochs=1)
        art = train_autoencoder("spiral", ds, cfg)
        y1, y2 = ds.inputs[:, 2], ds.inputs[:, 3]
        l1 = float(np.mean(y1**2 + y2**2))
        l2 = float(np.mean((y1 - 1.0) ** 2 + (y2 - 1.0) ** 2))
        pairing = derangement_pairing(len(ds.inputs), cfg.pairing_seed)
        dists = spiral_distance(ds.s_train, ds.s_train[pairing], ds.spec)
        c_d = math.sqrt(ds.intrinsic_diameter)
        x0 = ds.inputs[:, 1]
        l3 = float(np.mean(np.abs(dists - c_d * np.abs(x0 - x0[pairing]))))
        expected = l1 + 20.0 * (l2 + l3)
        assert art.metrics[0]["train_loss"] == pytest.approx(expected, rel=1e-9)

    def test_deterministic_across_runs(self):
        ds = make_spiral_dataset(SpiralSpec(1.0), spiral_config(), seed=0, cap=30)
        cfg = AutoencoderTrainConfig(width=8, seed=3, epochs=3)
        a = train_autoencoder("spiral", ds, cfg)
        b = train_autoencoder("spiral", ds, cfg)
        for ra, rb in zip(a.metrics, b.metrics):
            assert ra == rb

    def test_resume_reproduces_next_epoch_bit_exactly(self):
        ds = make_spiral_dataset(SpiralSpec(1.0), spiral_config(), seed=0, cap=30)
        cfg = AutoencoderTrainConfig(width=8, seed=3, epochs=4)
        snapshots = {}

        def snap(epoch, row, field, opt):
            if epoch == 2:
                snapshots["pre"] = field.params.net_pre.copy()
                snapshots["post"] = field.params.net_post.copy()
                snapshots["opt"] = RmspropState.from_dict(opt.to_dict())

        full = train_autoencoder("spiral", ds, cfg, on_epoch=snap)
        field = build_autoencoder_field(ds.cfg, cfg)
        field.params.net_pre.unflatten(snapshots["pre"].flatten())
        field.params.net_post.unflatten(snapshots["post"].flatten())
        resumed = train_autoencoder("spiral", ds, cfg, field_obj=field,
                                    opt_state=snapshots["opt"], start_epoch=2)
        tail = full.metrics[2:]
        for ra, rb in zip(tail, resumed.metrics):
            assert ra == rb

    def test_divergence_raises(self):
        ds = make_spiral_dataset(SpiralSpec(1.0), spiral_config(), seed=0, cap=30)
        cfg = AutoencoderTrainConfig(width=8, seed=3, epochs=2)
        from polyflow.training import DivergedError
        from polyflow.flow import DivergenceError
        field = build_autoencoder_field(ds.cfg, cfg)
        blown = field.params.net_post.flatten()
        blown[:] = 1e200  # drives the decoded states, and the loss, past float range
        field.params.net_post.unflatten(blown)
        with pytest.raises((DivergedError, DivergenceError)):
            train_autoencoder("spiral", ds, cfg, field_obj=field)


class TestTrainClassifier:
    def latent_set(self, n=24):
        s = np.linspace(0.0, 2 * math.pi, n)
        spec = SpiralSpec(1.0)
        from polyflow.datasets import angular_labels, radial_labels
        return LabeledLatentSet(s, np.linspace(-2.0, 2.0, n),
                                radial_labels(s, spec), angular_labels(s, spec))

    def test_smoke_improves_accuracy(self):
        tc = ClassifierTrainConfig(width=16, seed=0, epochs=30, batch_size=8, steps=20,
                                   stop_accuracy=0.99)
        art = train_classifier(self.latent_set(), "radial", tc)
        assert art.metrics[-1]["accuracy"] >= art.metrics[0]["accuracy"]
        assert art.metrics[-1]["train_loss"] < art.metrics[0]["train_loss"]

    def test_inputs_rescaled_to_range(self):
        tc = ClassifierTrainConfig(rescale_inputs=True, rescale_range=(-3.0, 3.0))
        starts = classifier_inputs(np.array([0.0, 5.0, 10.0]), tc)
        assert np.array_equal(starts[:, 0], [-3.0, 0.0, 3.0])
        assert np.all(starts[:, 1:] == 0.0)

    def test_deterministic(self):
        tc = ClassifierTrainConfig(width=8, seed=1, epochs=3, batch_size=8, steps=10)
        a = train_classifier(self.latent_set(), "angular", tc)
        b = train_classifier(self.latent_set(), "angular", tc)
        for ra, rb in zip(a.metrics, b.metrics):
            assert ra == rb


class TestOptimizerOrderIndependence:
    def test_rmsprop_per_parameter_updates_commute_with_permutation(self):
        rng = np.random.default_rng(0)
        p = rng.normal(size=40)
        perm = rng.permutation(40)
        a, b = RmspropState(lr=0.01), RmspropState(lr=0.01)
        pa, pb = p.copy(), p[perm].copy()
        for _ in range(4):
            g = rng.normal(size=40)
            pa = a.step(pa, g)
            pb = b.step(pb, g[perm])
        assert np.array_equal(pa[perm], pb)

    def test_adam_per_parameter_updates_commute_with_permutation(self):
        rng = np.random.default_rng(1)
        p = rng.normal(size=40)
        perm = rng.permutation(40)
        a, b = AdamState(lr=0.01), AdamState(lr=0.01)
        pa, pb = p.copy(), p[perm].copy()
        for _ in range(4):
            g = rng.normal(size=40)
            pa = a.step(pa, g)
            pb = b.step(pb, g[perm])
        assert np.array_equal(pa[perm], pb)
