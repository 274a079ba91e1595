"""Scoring math: layer/baseline/balance scores, the weight gate, blending."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import (
    catalog_dict,
    node_dict,
    params_dict,
    random_scoring_instance,
    task_dict,
)
from oracles import oracle_baseline, oracle_final
from layersched.model import (
    ImageRef,
    LayerCatalog,
    NodeSpec,
    NodeState,
    TaskRequest,
)
from layersched.scoring import (
    MB,
    PluginConfig,
    WeightPolicy,
    baseline_score,
    cpu_score,
    download_cost,
    final_score,
    layer_score,
    local_layer_size,
    std_score,
    weight_gate,
)

GB = 1024 ** 3
WEB = ImageRef("web", "1")


def catalog_ab():
    return LayerCatalog(
        layers={"sha256:a": 30 * MB, "sha256:b": 70 * MB},
        images={WEB: ("sha256:a", "sha256:b")},
    )


def node_with(layers=(), cpu_committed=0, mem_committed=0,
              cpu_capacity=4000, mem_capacity=4 * GB, images=()):
    return NodeState(
        spec=NodeSpec(id="n0", cpu_capacity=cpu_capacity, mem_capacity=mem_capacity,
                      bandwidth=10 * MB, storage_capacity=100 * GB),
        local_layers=frozenset(layers),
        local_images=frozenset(images),
        cpu_committed=cpu_committed,
        mem_committed=mem_committed,
    )


class TestDownloadAndOverlap:
    def test_all_layers_local_costs_nothing(self):
        node = node_with(layers={"sha256:a", "sha256:b"})
        assert download_cost(catalog_ab(), node, WEB) == 0

    def test_cold_node_downloads_everything(self):
        assert download_cost(catalog_ab(), node_with(), WEB) == 100 * MB

    def test_overlap_is_the_complement(self):
        node = node_with(layers={"sha256:b"})
        assert local_layer_size(catalog_ab(), node, WEB) == 70 * MB
        assert download_cost(catalog_ab(), node, WEB) == 30 * MB


class TestLayerScore:
    def test_full_overlap_scores_100(self):
        node = node_with(layers={"sha256:a", "sha256:b"})
        assert layer_score(catalog_ab(), node, WEB) == 100.0

    def test_no_overlap_scores_0(self):
        assert layer_score(catalog_ab(), node_with(), WEB) == 0.0

    def test_partial_overlap_is_byte_fraction(self):
        # 70MB of a 100MB image cached -> 70.0
        node = node_with(layers={"sha256:b"})
        assert layer_score(catalog_ab(), node, WEB) == 70.0

    def test_empty_image_scores_0(self):
        catalog = LayerCatalog(layers={}, images={ImageRef("nil", "1"): ()})
        assert layer_score(catalog, node_with(), ImageRef("nil", "1")) == 0.0


class TestBalanceScores:
    def test_equal_ratios_are_balanced(self):
        node = node_with(cpu_committed=2000, mem_committed=2 * GB)
        assert std_score(node) == 0.0

    def test_half_the_ratio_gap(self):
        node = node_with(cpu_committed=3200, mem_committed=int(0.4 * 4 * GB))
        assert std_score(node) == pytest.approx(0.2)

    def test_maximal_imbalance(self):
        node = node_with(cpu_committed=4000, mem_committed=0)
        assert std_score(node) == 0.5

    def test_cpu_score_is_committed_fraction(self):
        assert cpu_score(node_with()) == 0.0
        assert cpu_score(node_with(cpu_committed=4000)) == 1.0
        assert cpu_score(node_with(cpu_committed=1500)) == 0.375


class TestWeightGate:
    def policy(self):
        return WeightPolicy(mode="dynamic", omega_high=2.0, omega_low=0.5,
                            h_size=10 * MB, h_cpu=0.6, h_std=0.16)

    def test_all_conditions_met_fires(self):
        assert weight_gate(self.policy(), 50 * MB, 0.3, 0.05) == 1

    def test_hot_cpu_blocks(self):
        assert weight_gate(self.policy(), 50 * MB, 1.0, 0.05) == 0

    def test_imbalance_blocks(self):
        assert weight_gate(self.policy(), 50 * MB, 0.3, 0.3) == 0

    def test_boundary_is_strict(self):
        policy = self.policy()
        assert weight_gate(policy, 10 * MB, 0.3, 0.05) == 0  # == h_size
        assert weight_gate(policy, 50 * MB, 0.6, 0.05) == 0  # == h_cpu
        assert weight_gate(policy, 50 * MB, 0.3, 0.16) == 0  # == h_std

    def test_monotone_in_every_argument(self):
        policy = self.policy()
        rng = random.Random(5)
        for _ in range(200):
            size = rng.randint(0, 30 * MB)
            cpu = rng.random()
            std = rng.random() / 2
            before = weight_gate(policy, size, cpu, std)
            # more overlap, less load, better balance: gate never drops
            after = weight_gate(policy, size + rng.randint(0, 10 * MB),
                                cpu * rng.random(), std * rng.random())
            assert after >= before


class TestBaselineScore:
    def test_empty_node_analytic(self):
        node = node_with()
        task = TaskRequest(task_id="t", image=WEB, cpu_request=400,
                           mem_request=int(0.1 * 4 * GB))
        # least_allocated: ((3600/4000)*100 + (0.9)*100)/2 = 90
        # balanced: ratios 0.1/0.1 -> std 0 -> 100; locality: absent -> 0
        got = baseline_score(node, task, catalog_ab(), PluginConfig())
        assert got == pytest.approx((90.0 + 100.0 + 0.0) / 3)

    def test_local_image_adds_locality(self):
        node = node_with(layers={"sha256:a", "sha256:b"}, images={WEB})
        task = TaskRequest(task_id="t", image=WEB, cpu_request=400,
                           mem_request=int(0.1 * 4 * GB))
        got = baseline_score(node, task, catalog_ab(), PluginConfig())
        assert got == pytest.approx((90.0 + 100.0 + 100.0) / 3)

    def test_disabled_plugins_drop_out(self):
        node = node_with()
        # ratios exactly 0.25/0.25, so balanced allocation is exactly 100
        task = TaskRequest(task_id="t", image=WEB, cpu_request=1000,
                           mem_request=GB)
        only_balanced = PluginConfig(least_allocated=None,
                                     balanced_allocation=1.0,
                                     image_locality=None)
        assert baseline_score(node, task, catalog_ab(), only_balanced) == 100.0

    def test_no_plugins_scores_zero(self):
        node = node_with()
        task = TaskRequest(task_id="t", image=WEB, cpu_request=1, mem_request=0)
        empty = PluginConfig(least_allocated=None, balanced_allocation=None,
                             image_locality=None)
        assert baseline_score(node, task, catalog_ab(), empty) == 0.0

    @given(seed=st.integers(0, 10 ** 6))
    @settings(max_examples=200, deadline=None)
    def test_matches_reference_formulas(self, seed):
        catalog, nodes, task, config = random_scoring_instance(seed)
        want = oracle_baseline(catalog_dict(catalog), node_dict(nodes[0]),
                               task_dict(task), params_dict(config)["plugins"])
        got = baseline_score(nodes[0], task, catalog, config.plugins)
        assert got == pytest.approx(want, abs=1e-9)


class TestFinalScore:
    def test_zero_weight_degenerates_to_baseline(self):
        policy = WeightPolicy(mode="static", omega_static=0.0)
        breakdown = final_score(policy, layer=70.0, baseline=40.0, gate=0)
        assert breakdown.final == 40.0

    def test_static_weight_4(self):
        policy = WeightPolicy(mode="static", omega_static=4.0)
        breakdown = final_score(policy, layer=70.0, baseline=40.0, gate=0)
        assert breakdown.final == 320.0
        assert breakdown.omega_used == 4.0

    def test_dynamic_gate_fired(self):
        policy = WeightPolicy(mode="dynamic", omega_high=2.0, omega_low=0.5)
        breakdown = final_score(policy, layer=70.0, baseline=40.0, gate=1)
        assert breakdown.final == 180.0

    def test_dynamic_gate_closed(self):
        policy = WeightPolicy(mode="dynamic", omega_high=2.0, omega_low=0.5)
        breakdown = final_score(policy, layer=70.0, baseline=40.0, gate=0)
        assert breakdown.final == 0.5 * 70.0 + 40.0

    def test_custom_table_keyed_by_condition_count(self):
        policy = WeightPolicy(mode="custom",
                              custom_table={0: 0.0, 1: 0.5, 2: 1.0, 3: 3.0})
        got = final_score(policy, layer=10.0, baseline=0.0, gate=0,
                          conditions_met=2)
        assert got.final == 10.0

    def test_breakdown_identity_is_bit_exact(self):
        rng = random.Random(9)
        for _ in range(500):
            policy = WeightPolicy(mode="static",
                                  omega_static=rng.uniform(0, 6))
            layer = rng.uniform(0, 100)
            baseline = rng.uniform(0, 100)
            b = final_score(policy, layer, baseline, gate=0)
            assert b.final == b.omega_used * b.layer_score + b.baseline_score


class TestProperties:
    @given(seed=st.integers(0, 10 ** 6))
    @settings(max_examples=300, deadline=None)
    def test_partition_law(self, seed):
        catalog, nodes, task, _ = random_scoring_instance(seed)
        for node in nodes:
            total = catalog.image_total_size(task.image)
            assert download_cost(catalog, node, task.image) \
                + local_layer_size(catalog, node, task.image) == total

    @given(seed=st.integers(0, 10 ** 6))
    @settings(max_examples=200, deadline=None)
    def test_layer_score_bounds_and_monotonicity(self, seed):
        catalog, nodes, task, _ = random_scoring_instance(seed)
        node = nodes[0]
        before = layer_score(catalog, node, task.image)
        assert 0.0 <= before <= 100.0
        # caching one more of the image's layers never lowers the score
        stack = catalog.images[task.image]
        missing = [d for d in stack if d not in node.local_layers]
        if missing:
            grown = NodeState(
                spec=node.spec,
                local_layers=node.local_layers | {missing[0]},
                local_images=node.local_images,
                running=node.running,
                cpu_committed=node.cpu_committed,
                mem_committed=node.mem_committed,
            )
            assert layer_score(catalog, grown, task.image) >= before

    @given(seed=st.integers(0, 10 ** 6), factor=st.integers(2, 64))
    @settings(max_examples=200, deadline=None)
    def test_layer_score_scale_invariance(self, seed, factor):
        catalog, nodes, task, _ = random_scoring_instance(seed)
        scaled = LayerCatalog(
            layers={d: s * factor for d, s in catalog.layers.items()},
            images=dict(catalog.images),
        )
        for node in nodes:
            assert layer_score(scaled, node, task.image) == pytest.approx(
                layer_score(catalog, node, task.image), abs=1e-9
            )

    @given(seed=st.integers(0, 10 ** 6))
    @settings(max_examples=200, deadline=None)
    def test_score_breakdown_matches_oracle(self, seed):
        catalog, nodes, task, config = random_scoring_instance(seed)
        from layersched.scheduler import score_node

        cd, pd, td = catalog_dict(catalog), params_dict(config), task_dict(task)
        for node in nodes:
            want = oracle_final(cd, node_dict(node), td, pd)
            got = score_node(node, task, catalog, config)
            assert got.layer_score == pytest.approx(want["layer_score"], abs=1e-9)
            assert got.baseline_score == pytest.approx(want["baseline_score"], abs=1e-9)
            assert got.std_score == pytest.approx(want["std_score"], abs=1e-9)
            assert got.cpu_score == pytest.approx(want["cpu_score"], abs=1e-9)
            assert got.weight_gate == want["weight_gate"]
            assert got.omega_used == pytest.approx(want["omega_used"], abs=1e-9)
            assert got.final == pytest.approx(want["final"], abs=1e-9)


class TestConfigValidation:
    def test_weight_order_enforced(self):
        with pytest.raises(ValueError):
            WeightPolicy(mode="dynamic", omega_high=0.5, omega_low=2.0)

    def test_threshold_ranges_enforced(self):
        with pytest.raises(ValueError):
            WeightPolicy(h_cpu=1.5)
        with pytest.raises(ValueError):
            WeightPolicy(h_std=0.7)

    def test_custom_table_must_cover_all_counts(self):
        with pytest.raises(ValueError):
            WeightPolicy(mode="custom", custom_table={0: 1.0, 3: 2.0})
