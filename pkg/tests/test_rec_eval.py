"""Recommendation benchmark: instances, HR/NDCG, harness determinism."""

import math
from itertools import combinations

import pytest

from revtrack.rec_eval import (
    BenchmarkConfig,
    build_rec_instance,
    hit_ratio,
    ndcg,
    one_pass_topk,
    parse_setting,
    run_benchmark,
)
from revtrack.synth_gen import SynthConfig, generate, plant_rec_instance


class OracleScorer:
    def __init__(self, truth):
        self.truth = set(truth)

    def __call__(self, sr):
        return 1.0 if any(
            (s, r) in self.truth for s in sr.senders for r in sr.receivers
        ) else 0.0


def rec_dataset(seed=5, n_sus=40, n_lic=40):
    return generate(
        SynthConfig(
            num_entities=3000,
            num_suspicious=n_sus,
            num_licit_subgraphs=n_lic,
            background_noise_edges=100,
            seed=seed,
        )
    )


# ---------------------------------------------------------------------------
# instance construction


def test_degenerate_instance():
    ds = generate(
        SynthConfig(
            num_entities=200,
            num_suspicious=1,
            num_licit_subgraphs=0,
            scheme_mix={"peeling_chain": 1.0, "nested_service": 0.0, "random_path": 0.0},
            background_noise_edges=0,
            seed=3,
        )
    )
    inst = plant_rec_instance(ds, n_plus=1, n_minus=0, seed=0)
    assert len(inst.senders) == 1 and len(inst.receivers) == 1
    assert inst.truth_links == {(inst.senders[0], inst.receivers[0])}
    assert inst.density == 1.0


def test_insufficient_pool_errors():
    ds = rec_dataset(n_sus=2, n_lic=2)
    with pytest.raises(ValueError, match="insufficient"):
        plant_rec_instance(ds, n_plus=50, n_minus=0, seed=0)


def test_density_identity_and_truth_subset():
    ds = rec_dataset()
    for i in range(5):
        inst = build_rec_instance(ds.subgraphs, 2, 6, seed=i, graph=ds.graph)
        assert inst.density * len(inst.senders) * len(inst.receivers) == pytest.approx(
            inst.n_plus, abs=1e-9
        )
        links = set(inst.truth_links)
        assert len(links) == 2
        assert all(s in inst.senders and r in inst.receivers for s, r in links)


def test_instance_deterministic():
    ds = rec_dataset()
    a = build_rec_instance(ds.subgraphs, 1, 5, seed=9, graph=ds.graph)
    b = build_rec_instance(ds.subgraphs, 1, 5, seed=9, graph=ds.graph)
    assert a == b


# ---------------------------------------------------------------------------
# metrics


def test_hit_ratio_examples():
    assert hit_ratio([("a", "b")], {("a", "b")}, 1) == 1.0
    recommended = [("t1", "x"), ("n", "n"), ("t2", "x")]
    truth = {("t1", "x"), ("t2", "x")}
    assert hit_ratio(recommended, truth, 3) == 1.0
    assert hit_ratio([("t1", "x"), ("n", "n"), ("m", "m")], truth, 3) == 0.5


def test_ndcg_examples():
    assert ndcg([("a", "b")], {("a", "b")}, 1) == 1.0
    recommended = [("t1", "x"), ("n", "n"), ("t2", "x")]
    truth = {("t1", "x"), ("t2", "x")}
    value = ndcg(recommended, truth, 3)
    assert value == pytest.approx(0.91972, abs=1e-5)
    assert ndcg([("n", "n")], truth, 1) == 0.0


def test_metric_errors_on_empty_truth():
    with pytest.raises(ValueError):
        hit_ratio([("a", "b")], set(), 1)
    with pytest.raises(ValueError):
        ndcg([("a", "b")], set(), 1)


def test_hr_equals_ndcg_at_k1_single_truth():
    truth = {("s", "r")}
    for rec in ([("s", "r")], [("x", "y")]):
        assert hit_ratio(rec, truth, 1) == ndcg(rec, truth, 1)


def hr_oracle(hits, truth_size, k):
    return sum(1 for rank in hits if rank <= k) / truth_size


def ndcg_oracle(hits, truth_size, k):
    dcg = 0.0
    for rank in hits:
        if rank <= k:
            dcg += 1.0 / math.log2(rank + 1)
    ideal = 0.0
    for rank in range(1, min(truth_size, k) + 1):
        ideal += 1.0 / math.log2(rank + 1)
    return dcg / ideal


def test_metrics_match_definition_all_patterns():
    # All hit-position patterns for lists up to length 6, truth up to 3.
    for length in range(0, 7):
        for truth_size in (1, 2, 3):
            truth = {("t", i) for i in range(truth_size)}
            fillers = [("f", i) for i in range(length)]
            for n_hits in range(0, min(truth_size, length) + 1):
                for hit_positions in combinations(range(1, length + 1), n_hits):
                    rec = list(fillers)
                    for j, pos in enumerate(hit_positions):
                        rec[pos - 1] = ("t", j)
                    for k in range(1, length + 1):
                        assert hit_ratio(rec, truth, k) == pytest.approx(
                            hr_oracle(hit_positions, truth_size, k), abs=1e-12
                        )
                        assert ndcg(rec, truth, k) == pytest.approx(
                            ndcg_oracle(hit_positions, truth_size, k), abs=1e-12
                        )


# ---------------------------------------------------------------------------
# harness


def test_one_pass_topk_with_oracle():
    ds = rec_dataset()
    inst = build_rec_instance(ds.subgraphs, 2, 5, seed=1, graph=ds.graph)
    links = one_pass_topk(inst, 2, OracleScorer(inst.truth_links))
    assert set(links) == set(inst.truth_links)


def test_run_benchmark_oracle_perfect_and_deterministic():
    ds = rec_dataset()

    class PoolOracle:
        """Scores against the truth of whichever instance is being run."""

        def __init__(self):
            self.truth = set()

        def __call__(self, sr):
            return 1.0 if any(
                (s, r) in self.truth for s in sr.senders for r in sr.receivers
            ) else 0.0

    # the harness builds instances internally, so wire the oracle per call
    from revtrack import rec_eval as re_mod

    oracle = PoolOracle()
    original = re_mod.recommend_links

    def patched(instance, k, config, seed):
        oracle.truth = set(instance.truth_links)
        return original(instance, k, config, seed)

    re_mod.recommend_links = patched
    try:
        cfg = BenchmarkConfig(scorer=oracle, variant="full", seed=100)
        table = run_benchmark(ds, [(1, 5, 1), (2, 10, 3)], 8, cfg)
        table2 = run_benchmark(ds, [(1, 5, 1), (2, 10, 3)], 8, cfg)
    finally:
        re_mod.recommend_links = original
    assert table == table2
    for setting, row in table.items():
        assert row["hr_mean"] == 1.0, setting
        assert row["ndcg_mean"] == 1.0, setting
        assert 0.0 < row["density_mean"] <= 1.0


def test_benchmark_variant_validation():
    with pytest.raises(ValueError):
        BenchmarkConfig(scorer=lambda sr: 0.5, variant="bogus")
    with pytest.raises(ValueError):
        BenchmarkConfig(scorer=lambda sr: 0.5, variant="no-finetune")


def test_parse_setting():
    assert parse_setting("1+5@1") == (1, 5, 1)
    assert parse_setting("10+10000@100") == (10, 10000, 100)
    with pytest.raises(ValueError):
        parse_setting("nope")
