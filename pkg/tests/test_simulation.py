import numpy as np
import pytest

from feddecomp.aggregation import AggregationMode
from feddecomp.datasets import ClientDataset, FederationSpec, generate_base
from feddecomp.errors import ConfigError
from feddecomp.models import Architecture, init_params
from feddecomp.simulation import (
    DataConfig,
    ModelConfig,
    RunConfig,
    build_federation,
    load_checkpoint,
    run,
    run_ablation,
    run_federation,
    sample_clients,
    save_checkpoint,
)
from feddecomp.training import LocalConfig, train_local, local_model_from_gradient


def tiny_config(**overrides) -> RunConfig:
    base = dict(
        federation=FederationSpec(
            num_clients=4, dirichlet_alpha=1.0, shortcut_strength=0.8, seed=0,
            test_fraction=0.2,
        ),
        local=LocalConfig(learning_rate=0.05, batch_size=25, local_epochs=1, seed=0),
        mode=AggregationMode(kind="fedavg"),
        data=DataConfig(classes=3, samples=400, input_dim=6),
        model=ModelConfig(kind="softmax"),
        rounds=4,
        decompose_every=2,
        seed=0,
    )
    base.update(overrides)
    return RunConfig(**base)


class TestSampleClients:
    def test_full_rate_returns_all_in_order(self):
        assert sample_clients(6, 1.0, round_index=3, seed=1) == [0, 1, 2, 3, 4, 5]

    def test_ten_percent_of_fifty_is_five(self):
        picked = sample_clients(50, 0.1, round_index=0, seed=1)
        assert len(picked) == 5
        assert picked == sorted(picked)
        assert all(0 <= c < 50 for c in picked)

    def test_deterministic_per_round(self):
        a = sample_clients(20, 0.3, round_index=4, seed=9)
        b = sample_clients(20, 0.3, round_index=4, seed=9)
        assert a == b

    def test_varies_across_rounds(self):
        subsets = {tuple(sample_clients(20, 0.3, r, seed=9)) for r in range(10)}
        assert len(subsets) > 1

    def test_at_least_one_client(self):
        assert len(sample_clients(10, 0.01, 0, seed=0)) == 1

    def test_bad_rate_rejected(self):
        with pytest.raises(ConfigError):
            sample_clients(10, 0.0, 0, seed=0)


class TestBuildFederation:
    def test_shortcut_columns_extend_input_dim(self):
        cfg = tiny_config()
        shards, test_x, test_y, arch = build_federation(cfg)
        assert len(shards) == 4
        assert arch.input_dim == 6 + 4
        assert all(s.input_dim == arch.input_dim for s in shards)
        assert test_x.shape[1] == arch.input_dim

    def test_no_shortcut_keeps_base_width(self):
        cfg = tiny_config(
            federation=FederationSpec(num_clients=4, dirichlet_alpha=1.0, seed=0)
        )
        _, test_x, _, arch = build_federation(cfg)
        assert arch.input_dim == 6
        assert test_x.shape[1] == 6

    def test_mlp_architecture_passthrough(self):
        cfg = tiny_config(model=ModelConfig(kind="mlp", hidden=5))
        _, _, _, arch = build_federation(cfg)
        assert arch.kind == "mlp"
        assert arch.hidden == 5


class TestRun:
    def test_single_client_fedavg_round_recovers_local_params(self, tmp_path):
        cfg = tiny_config(
            federation=FederationSpec(
                num_clients=1, dirichlet_alpha=1.0, seed=0, test_fraction=0.2
            ),
            rounds=1,
            decompose_every=1,
            output_dir=str(tmp_path / "solo"),
        )
        shards, test_x, test_y, arch = build_federation(cfg)
        summary = run_federation(shards, test_x, test_y, arch, cfg)
        assert summary.rounds_completed == 1

        start = init_params(arch, cfg.seed)
        grad, _ = train_local(start, shards[0], cfg.local, round_index=0)
        expected = local_model_from_gradient(start, grad)
        final, sidecar = load_checkpoint(tmp_path / "solo" / "checkpoint")
        assert np.allclose(final.flat, expected.flat, rtol=0, atol=1e-12)
        assert sidecar["config_hash"] == cfg.config_hash()

    def test_runs_are_byte_identical(self, tmp_path):
        cfg_a = tiny_config(output_dir=str(tmp_path / "a"))
        cfg_b = tiny_config(output_dir=str(tmp_path / "b"))
        run(cfg_a)
        run(cfg_b)
        for name in ("metrics.jsonl", "metrics.csv", "checkpoint.bin"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_worker_count_does_not_change_results(self, tmp_path):
        run(tiny_config(output_dir=str(tmp_path / "w1"), workers=1))
        run(tiny_config(output_dir=str(tmp_path / "w4"), workers=4))
        assert (tmp_path / "w1" / "metrics.jsonl").read_bytes() == (
            tmp_path / "w4" / "metrics.jsonl"
        ).read_bytes()

    def test_history_and_summary_consistent(self):
        summary = run(tiny_config())
        assert summary.rounds_completed == 4
        assert len(summary.history) == 4
        assert summary.best_accuracy >= summary.final_accuracy
        assert summary.metrics_path is None
        accs = [h.test_accuracy for h in summary.history]
        assert summary.final_accuracy == accs[-1]
        assert summary.best_accuracy == max(accs)

    def test_decomposition_cadence(self):
        summary = run(tiny_config(rounds=6, decompose_every=3))
        instrumented = [h.round for h in summary.history if h.global_loss is not None]
        assert instrumented == [2, 5]

    def test_decompose_zero_disables(self):
        summary = run(tiny_config(decompose_every=0))
        assert all(h.global_loss is None for h in summary.history)

    def test_identity_holds_on_every_instrumented_round(self):
        summary = run(tiny_config(rounds=6, decompose_every=1))
        for h in summary.history:
            resid = abs(
                h.local_loss + h.dist_shift_signed + h.aggregation_signed - h.global_loss
            )
            assert resid <= 1e-9 * max(1.0, abs(h.global_loss))

    def test_client_sampling_with_principal_mode(self):
        cfg = tiny_config(
            federation=FederationSpec(
                num_clients=8, dirichlet_alpha=1.0, seed=0, test_fraction=0.2
            ),
            data=DataConfig(classes=3, samples=800, input_dim=6),
            mode=AggregationMode(kind="principal"),
            sampling_rate=0.5,
            rounds=3,
        )
        summary = run(cfg)
        assert summary.rounds_completed == 3
        # 4 participants per round leave at most 4 spectrum entries
        assert all(len(h.spectrum) == 4 for h in summary.history)

    def test_spectrum_descending_and_nonnegative(self):
        summary = run(tiny_config(mode=AggregationMode(kind="principal")))
        for h in summary.history:
            spec = h.spectrum
            assert all(v >= 0 for v in spec)
            assert spec == sorted(spec, reverse=True)


class TestPrincipalEqualsFedavgWhenRankOne:
    def test_single_client_trajectories_bit_match(self, tmp_path):
        base = dict(
            federation=FederationSpec(
                num_clients=1, dirichlet_alpha=1.0, seed=3, test_fraction=0.2
            ),
            data=DataConfig(classes=3, samples=300, input_dim=5),
            local=LocalConfig(learning_rate=0.05, batch_size=20, local_epochs=1, seed=3),
            rounds=5,
            seed=3,
        )
        run(RunConfig(mode=AggregationMode(kind="fedavg"),
                      output_dir=str(tmp_path / "avg"), **base))
        run(RunConfig(mode=AggregationMode(kind="principal"),
                      output_dir=str(tmp_path / "pri"), **base))
        for name in ("metrics.jsonl", "metrics.csv", "checkpoint.bin"):
            assert (tmp_path / "avg" / name).read_bytes() == (
                tmp_path / "pri" / name
            ).read_bytes()


class TestHomogeneousClients:
    def test_identical_shards_keep_cosine_one_and_parallel_update(self):
        # full-batch steps make the clients' trajectories identical (batch
        # shuffling is per-client, so mini-batches would differ)
        features, labels = generate_base(3, 200, input_dim=6, seed=5)
        shards = [ClientDataset(features, labels, client_id=i) for i in range(4)]
        test_x, test_y = generate_base(3, 60, input_dim=6, seed=6)
        arch = Architecture("softmax", input_dim=6, num_classes=3)
        cfg = tiny_config(
            local=LocalConfig(
                learning_rate=0.05, batch_size=len(labels), local_epochs=2, seed=0
            ),
            mode=AggregationMode(kind="principal"),
            rounds=3,
            decompose_every=0,
        )
        summary = run_federation(shards, test_x, test_y, arch, cfg)
        for h in summary.history:
            assert h.mean_pairwise_cosine == pytest.approx(1.0, abs=1e-9)


class TestAblation:
    def test_grid_runs_all_four_cells(self):
        cfg = tiny_config(
            local=LocalConfig(
                learning_rate=0.05, batch_size=25, local_epochs=1,
                margin_weight=0.05, seed=0,
            ),
            rounds=2,
            decompose_every=0,
        )
        results = run_ablation(cfg, seeds=[0, 1])
        assert set(results) == {"fedavg", "principal_only", "margin_only", "full"}
        assert all(len(v) == 2 for v in results.values())

    def test_margin_weight_required(self):
        with pytest.raises(ConfigError):
            run_ablation(tiny_config(rounds=2))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        arch = Architecture("mlp", input_dim=3, num_classes=2, hidden=4)
        params = init_params(arch, seed=7)
        save_checkpoint(tmp_path / "ckpt", params, config_hash="abc123")
        loaded, sidecar = load_checkpoint(tmp_path / "ckpt")
        assert np.array_equal(loaded.flat, params.flat)
        assert loaded.arch == arch
        assert sidecar["config_hash"] == "abc123"

    def test_format_mismatch_rejected(self, tmp_path):
        arch = Architecture("softmax", input_dim=3, num_classes=2)
        save_checkpoint(tmp_path / "ckpt", init_params(arch, 0), "h")
        sidecar_path = tmp_path / "ckpt.json"
        sidecar_path.write_text(sidecar_path.read_text().replace("float64-le-flat", "v0"))
        with pytest.raises(ConfigError):
            load_checkpoint(tmp_path / "ckpt")


class TestRunConfig:
    def test_dict_round_trip(self):
        cfg = tiny_config()
        assert RunConfig.from_dict(cfg.to_dict()) == cfg

    def test_with_seed_sets_all_three(self):
        cfg = tiny_config().with_seed(42)
        assert cfg.seed == 42
        assert cfg.federation.seed == 42
        assert cfg.local.seed == 42

    def test_hash_insensitive_to_output_dir_and_workers(self):
        a = tiny_config(output_dir="x", workers=1)
        b = tiny_config(output_dir="y", workers=8)
        assert a.config_hash() == b.config_hash()

    def test_hash_sensitive_to_mode(self):
        a = tiny_config(mode=AggregationMode(kind="fedavg"))
        b = tiny_config(mode=AggregationMode(kind="principal"))
        assert a.config_hash() != b.config_hash()

    def test_bad_nested_dict_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"federation": {"num_clients": 2}})

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigError):
            tiny_config(rounds=0)
        with pytest.raises(ConfigError):
            tiny_config(sampling_rate=1.5)
        with pytest.raises(ConfigError):
            tiny_config(workers=0)
