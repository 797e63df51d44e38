"""Speaker-conditioning building blocks and the shared training core."""
import numpy as np
import pytest
import torch

from multivoice.speaker import (
    SiteProjection,
    SpeakerEmbeddingTable,
    apply_feature_gate,
    augment_input,
    init_recurrent_state,
    site_embed,
)
from multivoice.training import (
    OptimizerSchedule,
    finite_difference_check,
    format_log_line,
    learning_rate_at,
    load_checkpoint,
    load_model_state,
    make_optimizer,
    model_state_arrays,
    restore_training_state,
    save_checkpoint,
    set_seed,
    train_steps,
    training_state_arrays,
)


class TestEmbeddingTable:
    def test_init_range(self):
        table = SpeakerEmbeddingTable([f"s{i}" for i in range(50)], 16)
        w = table.weight.detach()
        assert float(w.min()) >= -0.1 and float(w.max()) <= 0.1
        assert w.shape == (50, 16)

    def test_lookup_by_id_and_index(self):
        table = SpeakerEmbeddingTable(["a", "b"], 4)
        assert torch.equal(table.row("b"), table.row(1))
        with pytest.raises(KeyError):
            table.row("c")
        with pytest.raises(KeyError):
            table.row(2)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            SpeakerEmbeddingTable(["a", "a"], 4)

    def test_gradient_only_touches_used_rows(self):
        table = SpeakerEmbeddingTable(["a", "b", "c"], 4)
        loss = table.row("b").sum()
        loss.backward()
        g = table.weight.grad
        assert torch.all(g[1] == 1.0)
        assert torch.all(g[0] == 0.0) and torch.all(g[2] == 0.0)


class TestSites:
    def test_zero_projection_softsign_gives_zero(self):
        site = SiteProjection(8, 5, "softsign")
        with torch.no_grad():
            site.linear.weight.zero_()
            site.linear.bias.zero_()
        out = site(torch.randn(8))
        assert torch.all(out == 0.0)

    def test_distinct_speakers_distinct_outputs(self):
        torch.manual_seed(0)
        table = SpeakerEmbeddingTable(["a", "b"], 8)
        site = SiteProjection(8, 5)
        oa = site_embed(table, "a", site)
        ob = site_embed(table, "b", site)
        assert not torch.allclose(oa, ob)

    def test_unknown_nonlinearity_rejected(self):
        with pytest.raises(ValueError, match="nonlinearity"):
            SiteProjection(4, 4, "relu")

    def test_feature_gate_identity_and_zero(self):
        x = torch.randn(6, 3)
        assert torch.equal(apply_feature_gate(x, torch.ones(3)), x)
        assert torch.all(apply_feature_gate(x, torch.zeros(3)) == 0.0)

    def test_feature_gate_matches_loop(self):
        rng = np.random.default_rng(1)
        x = torch.tensor(rng.standard_normal((4, 5)))
        g = torch.tensor(rng.standard_normal(5))
        got = apply_feature_gate(x, g)
        for t in range(4):
            for c in range(5):
                assert float(got[t, c]) == float(x[t, c]) * float(g[c])

    def test_feature_gate_channel_dim(self):
        x = torch.randn(3, 4, 6)
        g = torch.randn(4)
        got = apply_feature_gate(x, g, channel_dim=1)
        assert torch.allclose(got[:, 2, :], x[:, 2, :] * g[2])
        with pytest.raises(ValueError, match="channel"):
            apply_feature_gate(x, torch.randn(5), channel_dim=1)

    def test_augment_input(self):
        frames = torch.randn(7, 3)
        g = torch.tensor([1.0, 2.0])
        out = augment_input(frames, g)
        assert out.shape == (7, 5)
        assert torch.equal(out[:, :3], frames)
        assert torch.all(out[:, 3:] == g)
        assert torch.equal(augment_input(frames, torch.zeros(0)), frames)

    def test_recurrent_init_replicated_over_layers_and_directions(self):
        g = torch.tensor([0.5, -0.5, 0.25])
        h0 = init_recurrent_state(g, n_layers=4, bidirectional=True, batch=2)
        assert h0.shape == (8, 2, 3)
        for layer in range(8):
            for b in range(2):
                assert torch.equal(h0[layer, b], g)

    def test_recurrent_init_zero_matches_default(self):
        torch.manual_seed(3)
        gru = torch.nn.GRU(4, 3, num_layers=2, bidirectional=True)
        x = torch.randn(5, 1, 4)
        h0 = init_recurrent_state(torch.zeros(3), n_layers=2,
                                  bidirectional=True)
        default, _ = gru(x)
        seeded, _ = gru(x, h0)
        assert torch.allclose(default, seeded)

    def test_recurrent_init_changes_first_step(self):
        torch.manual_seed(4)
        gru = torch.nn.GRU(4, 3)
        x = torch.randn(5, 1, 4)
        a, _ = gru(x, init_recurrent_state(torch.full((3,), 0.9)))
        b, _ = gru(x, init_recurrent_state(torch.full((3,), -0.9)))
        assert not torch.allclose(a[0], b[0])


class TestSchedule:
    def test_paper_triple(self):
        sched = OptimizerSchedule(1e-3, 0.95, 400)
        assert learning_rate_at(sched, 0) == pytest.approx(1e-3)
        assert learning_rate_at(sched, 399) == pytest.approx(1e-3)
        assert learning_rate_at(sched, 400) == pytest.approx(0.95e-3)
        assert learning_rate_at(sched, 1200) == pytest.approx(1e-3 * 0.95 ** 3)

    def test_constant_when_no_decay(self):
        sched = OptimizerSchedule(1e-3, 1.0, None)
        assert learning_rate_at(sched, 10_000) == pytest.approx(1e-3)

    def test_validation(self):
        with pytest.raises(ValueError):
            OptimizerSchedule(-1.0)
        with pytest.raises(ValueError):
            OptimizerSchedule(1e-3, 1.5)
        with pytest.raises(ValueError):
            OptimizerSchedule(1e-3, 0.9, 0)
        with pytest.raises(ValueError):
            learning_rate_at(OptimizerSchedule(1e-3), -1)

    def test_adam_single_step_hand_computed(self):
        # standard update with bias correction, one step from zero state
        theta = torch.nn.Parameter(torch.tensor([2.0], dtype=torch.float64))
        sched = OptimizerSchedule(0.1)
        opt = make_optimizer([theta], sched)
        loss = 0.5 * (theta ** 2).sum()   # grad = theta = 2.0
        loss.backward()
        opt.step()
        g = 2.0
        m_hat = (1 - sched.beta1) * g / (1 - sched.beta1)
        v_hat = (1 - sched.beta2) * g * g / (1 - sched.beta2)
        expected = 2.0 - 0.1 * m_hat / (np.sqrt(v_hat) + sched.eps)
        assert float(theta.detach()) == pytest.approx(expected, rel=1e-10)


class TestGradCheck:
    def test_quadratic_is_tight(self):
        x = torch.tensor([1.0, -2.0, 0.5], dtype=torch.float64,
                         requires_grad=True)

        def loss_fn():
            return (x ** 2).sum()

        report = finite_difference_check(loss_fn, {"x": x})
        assert report.passed
        assert report.block_errors["x"] < 1e-8

    def test_corrupted_gradient_fails(self):
        x = torch.tensor([1.0, 2.0], dtype=torch.float64, requires_grad=True)

        class Corrupt(torch.autograd.Function):
            @staticmethod
            def forward(ctx, inp):
                return (inp ** 2).sum()

            @staticmethod
            def backward(ctx, grad_out):
                return grad_out * torch.tensor([1.0, 1.0],
                                               dtype=torch.float64)

        report = finite_difference_check(lambda: Corrupt.apply(x), {"x": x})
        assert not report.passed

    def test_nonfinite_loss_rejected(self):
        x = torch.tensor([1.0], dtype=torch.float64, requires_grad=True)
        with pytest.raises(ValueError, match="finite"):
            finite_difference_check(lambda: x.sum() / 0.0, {"x": x})


class TestCheckpoints:
    def _write(self, path):
        arrays = {
            "model/w": np.arange(6, dtype=np.float32).reshape(2, 3),
            "model/b": np.array([1.5, -2.5]),
            "counter": np.asarray(7, dtype=np.int64),
        }
        save_checkpoint(path, "demo", arrays, {"lr": 1e-3, "layers": 2},
                        iteration=42, seed=9, extra={"note": "x"})

    def test_roundtrip_restores_everything(self, tmp_path):
        path = tmp_path / "demo.ckpt"
        self._write(path)
        ck = load_checkpoint(path)
        assert ck.tag == "demo" and ck.iteration == 42 and ck.seed == 9
        assert ck.config == {"lr": 1e-3, "layers": 2}
        assert ck.extra == {"note": "x"}
        np.testing.assert_array_equal(
            ck.arrays["model/w"], np.arange(6, dtype=np.float32).reshape(2, 3))
        assert ck.arrays["model/b"].dtype == np.float64

    def test_save_load_save_byte_identical(self, tmp_path):
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        self._write(p1)
        ck = load_checkpoint(p1)
        save_checkpoint(p2, ck.tag, ck.arrays, ck.config, ck.iteration,
                        ck.seed, ck.extra)
        assert p1.read_bytes() == p2.read_bytes()

    def test_foreign_file_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(ValueError, match="not a checkpoint"):
            load_checkpoint(path)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "demo.ckpt"
        self._write(path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-4])
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(path)

    def test_model_state_roundtrip(self):
        torch.manual_seed(5)
        net = torch.nn.Sequential(torch.nn.Linear(3, 4), torch.nn.Linear(4, 2))
        arrays = model_state_arrays(net)
        torch.manual_seed(6)
        other = torch.nn.Sequential(torch.nn.Linear(3, 4), torch.nn.Linear(4, 2))
        load_model_state(other, arrays)
        x = torch.randn(5, 3)
        assert torch.equal(net(x), other(x))
        with pytest.raises(KeyError):
            load_model_state(other, {"model/nope": np.zeros(1)})


class TestTrainingLoop:
    def _quadratic_setup(self, seed):
        set_seed(seed)
        model = torch.nn.Linear(4, 1)
        sched = OptimizerSchedule(0.05, 0.9, 5)
        opt = make_optimizer(model.parameters(), sched)
        x = torch.randn(16, 4)
        y = x.sum(dim=1, keepdim=True)

        def loss_fn(_k):
            return ((model(x) - y) ** 2).mean()

        return model, opt, sched, loss_fn

    def test_loss_decreases_and_logs(self):
        model, opt, sched, loss_fn = self._quadratic_setup(0)
        lines: list = []
        losses = train_steps(model, opt, sched, loss_fn, iterations=40,
                             log_interval=10, log_lines=lines)
        assert losses[-1] < losses[0] * 0.5
        assert len(lines) == 4
        first = lines[0].split("\t")
        assert first[0] == "0" and float(first[2]) == pytest.approx(0.05)

    def test_bitwise_reproducible(self):
        results = []
        for _ in range(2):
            model, opt, sched, loss_fn = self._quadratic_setup(123)
            train_steps(model, opt, sched, loss_fn, iterations=20)
            results.append(model.weight.detach().clone())
        assert torch.equal(results[0], results[1])

    def test_checkpoint_resume_identical_losses(self, tmp_path):
        model, opt, sched, loss_fn = self._quadratic_setup(7)
        train_steps(model, opt, sched, loss_fn, iterations=10)
        path = tmp_path / "state.ckpt"
        save_checkpoint(path, "quad", training_state_arrays(model, opt),
                        {}, iteration=10, seed=7)
        straight = train_steps(model, opt, sched, loss_fn, iterations=10,
                               start_iteration=10)

        model2, opt2, sched2, loss_fn2 = self._quadratic_setup(7)
        ck = load_checkpoint(path)
        restore_training_state(model2, opt2, ck.arrays)
        resumed = train_steps(model2, opt2, sched2, loss_fn2, iterations=10,
                              start_iteration=ck.iteration)
        assert straight == resumed

    def test_log_line_format(self):
        assert format_log_line(30, 1.23456789, 1e-3) == "30\t1.234568\t0.001"
