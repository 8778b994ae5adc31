from dataclasses import replace

import numpy as np
import pytest

from ltu import engine as E
from ltu.data import gen_blobs, make_split
from ltu.diffnum import CrossEntropyLoss, ModelSpec, accuracy
from ltu.mi import train_mi_ensemble


class Tripwire:
    """Stands in for a dataset or ensemble that must never be touched."""

    def __init__(self, name):
        object.__setattr__(self, "_name", name)

    def __getattr__(self, attr):
        raise AssertionError(f"{self._name} was read (.{attr})")

    def __len__(self):
        raise AssertionError(f"{self._name} was read (len)")


SPEC = ModelSpec((2, 12, 4), "tanh")


@pytest.fixture(scope="module")
def setup():
    ds = gen_blobs(60, 4, 2, 0.35, 0)
    split = make_split(ds, 0.1, 0.3, 0, n_test=60)
    orig = E.train_original(SPEC, split.forget.concat(split.remain), E.TrainConfig(epochs=20), 0)
    ens = train_mi_ensemble(SPEC, orig, split.remain, split.test, K=3, seed=0, max_steps=50)
    return split, orig, ens


FAST = E.LtuConfig(iterations=15, batch_support=8, batch_query=8, k=16)


class TestTraining:
    def test_gold_separable(self):
        ds = gen_blobs(50, 3, 2, 0.05, 1)
        split = make_split(ds, 0.1, 0.3, 1, n_test=30)
        spec = ModelSpec((2, 12, 3))
        gold = E.retrain_gold(spec, split, E.TrainConfig(epochs=30), 0)
        assert accuracy(spec, gold, split.remain.X, split.remain.y) >= 0.99

    def test_gold_deterministic(self, setup):
        split, _, _ = setup
        cfg = E.TrainConfig(epochs=3)
        assert np.array_equal(E.retrain_gold(SPEC, split, cfg, 4), E.retrain_gold(SPEC, split, cfg, 4))

    def test_gold_never_reads_forget(self, setup):
        split, _, _ = setup
        poisoned = replace(split, forget=Tripwire("D_f"))
        E.retrain_gold(SPEC, poisoned, E.TrainConfig(epochs=1), 0)

    def test_loss_tol_stops_early(self, setup):
        split, _, _ = setup
        a = E.train_original(SPEC, split.remain, E.TrainConfig(epochs=50, loss_tol=10.0), 0)
        b = E.train_original(SPEC, split.remain, E.TrainConfig(epochs=1), 0)
        assert np.array_equal(a, b)


class TestBaselines:
    def test_zero_epochs_unchanged(self, setup):
        split, orig, _ = setup
        assert np.array_equal(E.finetune_baseline(SPEC, orig, split.remain, 0, 0.1), orig)
        assert np.array_equal(E.randlabel_baseline(SPEC, orig, split, 0, 0.1, 0), orig)
        assert np.array_equal(E.ga_baseline(SPEC, orig, split.forget, 0, 0.1), orig)

    def test_finetune_full_batch_monotone(self, setup):
        split, orig, _ = setup
        loss = CrossEntropyLoss(SPEC, split.remain.X, split.remain.y)
        p, prev = orig, loss.loss(orig)
        for _ in range(10):
            p = E.finetune_baseline(SPEC, p, split.remain, 1, 0.01, batch_size=len(split.remain))
            cur = loss.loss(p)
            assert cur <= prev + 1e-12
            prev = cur

    def test_finetune_never_reads_forget(self, setup, monkeypatch):
        split, orig, _ = setup
        seen = []
        real = E.train_classifier

        def spy(spec, params, data, cfg, seed):
            seen.append(set(data.ids.tolist()))
            return real(spec, params, data, cfg, seed)

        monkeypatch.setattr(E, "train_classifier", spy)
        E.finetune_baseline(SPEC, orig, split.remain, 1, 0.01)
        E.retrain_gold(SPEC, split, E.TrainConfig(epochs=1), 0)
        forget = set(split.forget.ids.tolist())
        assert len(seen) == 2 and all(not (s & forget) for s in seen)

    def test_randlabel_data(self, setup, monkeypatch):
        split, orig, _ = setup
        seen = {}
        real = E.train_classifier

        def spy(spec, params, data, cfg, seed):
            seen["data"] = data
            return real(spec, params, data, cfg, seed)

        monkeypatch.setattr(E, "train_classifier", spy)
        E.randlabel_baseline(SPEC, orig, split, 1, 0.01, 0)
        data = seen["data"]
        expected = set(split.remain_subset.ids.tolist()) | set(split.forget.ids.tolist())
        assert set(data.ids.tolist()) == expected and len(data) == len(expected)
        is_f = np.isin(data.ids, split.forget.ids)
        true = dict(zip(split.forget.ids.tolist(), split.forget.y.tolist()))
        assert all(y != true[i] for i, y in zip(data.ids[is_f].tolist(), data.y[is_f].tolist()))

    def test_ga_raises_forget_error(self, setup):
        split, orig, _ = setup
        f = split.forget
        after = E.ga_baseline(SPEC, orig, f, 50, 0.5)
        assert 1 - accuracy(SPEC, after, f.X, f.y) > 1 - accuracy(SPEC, orig, f.X, f.y)

    def test_ga_sign_symmetry(self, setup):
        split, orig, _ = setup
        g = CrossEntropyLoss(SPEC, split.forget.X, split.forget.y).grad(orig)
        assert np.allclose(E.ga_baseline(SPEC, orig, split.forget, 1, 0.1), orig + 0.1 * g)
        assert np.allclose(E.ga_baseline(SPEC, orig, split.forget, 1, -0.1), orig - 0.1 * g)


class TestLtuConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"combine_policy": "mean"},
            {"combine_policy": "alternate", "forget_feedback": False},
            {"iterations": -1},
            {"k": 0},
            {"rho": 1.0},
            {"beta": np.nan},
        ],
    )
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            E.LtuConfig(**kw)

    def test_meta_opt_off_zeroes_alpha(self):
        assert E.LtuConfig(meta_opt=False).meta_config().alpha == 0.0

    def test_ablation_names(self):
        assert E.ablation(E.LtuConfig(), "gradadd").combine_policy == "add"
        with pytest.raises(ValueError):
            E.ablation(E.LtuConfig(), "nope")


class TestLtu:
    def test_zero_iterations(self, setup):
        split, orig, ens = setup
        r = E.ltu_unlearn(SPEC, orig, split, ens, replace(FAST, iterations=0))
        assert np.array_equal(r.final_params, orig) and r.trajectory == []

    def test_deterministic(self, setup):
        split, orig, ens = setup
        a = E.ltu_unlearn(SPEC, orig, split, ens, FAST)
        b = E.ltu_unlearn(SPEC, orig, split, ens, FAST)
        assert np.array_equal(a.final_params, b.final_params)
        assert a.trajectory_dicts() == b.trajectory_dicts()
        assert len(a.trajectory) == FAST.iterations and a.wall_time_seconds >= 0

    def test_projection_guarantee(self, setup):
        split, orig, ens = setup
        r = E.ltu_unlearn(SPEC, orig, split, ens, replace(FAST, iterations=40))
        assert all(t.update_cosine_remember >= -1e-9 for t in r.trajectory)
        assert any(t.cosine is not None for t in r.trajectory)

    def test_without_forget_feedback(self, setup):
        split, orig, _ = setup
        r = E.ltu_unlearn(SPEC, orig, split, Tripwire("MI ensemble"), replace(FAST, forget_feedback=False))
        for t in r.trajectory:
            assert t.forget_loss is None and t.update_cosine_remember == pytest.approx(1.0)

    def test_without_remember_feedback_never_reads_remain_subset(self, setup):
        split, orig, ens = setup
        poisoned = replace(split, remain_subset=Tripwire("remain subset"))
        r = E.ltu_unlearn(SPEC, orig, poisoned, ens, replace(FAST, remember_feedback=False))
        assert all(t.remember_loss is None for t in r.trajectory)

    def test_eval_attacker_never_guides(self, setup, monkeypatch):
        split, orig, ens = setup
        used = []
        real = E.ForgettingLoss

        def spy(spec, mi, audit):
            used.append(mi)
            return real(spec, mi, audit)

        monkeypatch.setattr(E, "ForgettingLoss", spy)
        E.ltu_unlearn(SPEC, orig, split, ens, FAST)
        assert used and all(m is not ens.eval_model for m in used)
        assert all(any(m is g for g in ens.guidance) for m in used)

    def test_alternate_parity(self, setup):
        split, orig, ens = setup
        r = E.ltu_unlearn(SPEC, orig, split, ens, replace(FAST, combine_policy="alternate"))
        for t in r.trajectory:
            if t.iter % 2 == 0:
                assert t.remember_loss is not None and t.forget_loss is None
            else:
                assert t.remember_loss is None and t.forget_loss is not None

    def test_needs_two_guidance_attackers(self, setup):
        split, orig, _ = setup

        class One:
            K = 1

        with pytest.raises(ValueError):
            E.ltu_unlearn(SPEC, orig, split, One(), FAST)
        with pytest.raises(ValueError):
            E.ltu_unlearn(SPEC, orig, split, None, FAST)

    def test_remembering_lowers_support_loss(self, setup):
        split, orig, _ = setup
        cfg = replace(FAST, forget_feedback=False, iterations=60)
        r = E.ltu_unlearn(SPEC, orig, split, None, cfg)
        first = np.mean([t.remember_loss for t in r.trajectory[:10]])
        last = np.mean([t.remember_loss for t in r.trajectory[-10:]])
        assert last < first
