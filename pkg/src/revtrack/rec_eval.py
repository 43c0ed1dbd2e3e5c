"""Link-recommendation benchmark: instance construction, HR@k, NDCG@k.

An instance merges the boundaries of a few labeled subgraphs into one
candidate sender set and receiver set; the suspicious subgraphs contribute
the ground-truth links. Instance difficulty is summarized by the density
n+ / (|S| * |R|).
"""

import math
from dataclasses import dataclass

import numpy as np

from .classifier import SRPair
from .graph_core import SUBGRAPH_LICIT, SUBGRAPH_SUSPICIOUS, extract_boundary
from .rev_filter import FilterConfig, rev_filter
from .utils import parallel_map


@dataclass(frozen=True)
class RecTestInstance:
    senders: tuple
    receivers: tuple
    truth_links: frozenset  # {(sender, receiver)}
    n_plus: int
    n_minus: int

    @property
    def density(self) -> float:
        return self.n_plus / (len(self.senders) * len(self.receivers))

    @property
    def initial_pair(self) -> SRPair:
        return SRPair(senders=self.senders, receivers=self.receivers)


@dataclass
class RecMetrics:
    hr: float
    ndcg: float
    k: int


def boundary_pools(subgraphs, graph):
    """Split labeled subgraphs into the 1-1 suspicious pool and licit pool.

    Returns (plus_pool, minus_pool): plus entries are (senders, receivers)
    with singleton sides; minus entries are full boundary tuples. Subgraphs
    with an empty boundary side are dropped, as downstream stages cannot
    use them.
    """
    plus_pool, minus_pool = [], []
    for sg in subgraphs:
        if sg.label is None:
            continue
        b = extract_boundary(graph, sg)
        if b.has_empty_boundary:
            continue
        senders = tuple(sorted(b.senders))
        receivers = tuple(sorted(b.receivers))
        if sg.label == SUBGRAPH_SUSPICIOUS:
            if len(senders) == 1 and len(receivers) == 1:
                plus_pool.append((senders, receivers))
        elif sg.label == SUBGRAPH_LICIT:
            minus_pool.append((senders, receivers))
    return plus_pool, minus_pool


def _instance_from_pools(plus_pool, minus_pool, n_plus, n_minus, seed):
    if len(plus_pool) < n_plus or len(minus_pool) < n_minus:
        raise ValueError(
            f"insufficient subgraph pools: need {n_plus} one-one suspicious "
            f"(have {len(plus_pool)}) and {n_minus} licit (have {len(minus_pool)})"
        )
    rng = np.random.default_rng(seed)
    plus_idx = rng.choice(len(plus_pool), size=n_plus, replace=False)
    senders, receivers, truth = set(), set(), set()
    for i in plus_idx:
        s_set, r_set = plus_pool[int(i)]
        senders.update(s_set)
        receivers.update(r_set)
        truth.add((s_set[0], r_set[0]))
    if n_minus:
        minus_idx = rng.choice(len(minus_pool), size=n_minus, replace=False)
        for i in minus_idx:
            s_set, r_set = minus_pool[int(i)]
            senders.update(s_set)
            receivers.update(r_set)
    if len(truth) < n_plus:
        raise ValueError("sampled suspicious subgraphs share a link; use more data")
    return RecTestInstance(
        senders=tuple(sorted(senders)),
        receivers=tuple(sorted(receivers)),
        truth_links=frozenset(truth),
        n_plus=n_plus,
        n_minus=n_minus,
    )


def build_rec_instance(subgraphs, n_plus, n_minus, seed, graph) -> RecTestInstance:
    """One benchmark instance built from scratch; deterministic under seed."""
    plus_pool, minus_pool = boundary_pools(subgraphs, graph)
    return _instance_from_pools(plus_pool, minus_pool, n_plus, n_minus, seed)


# ---------------------------------------------------------------------------
# metrics


def hit_ratio(recommended, truth, k) -> float:
    """Fraction of ground-truth links present in the top-k recommendations."""
    if not truth:
        raise ValueError("hit ratio undefined for empty truth set")
    top = list(recommended)[:k]
    return len(set(top) & set(truth)) / len(truth)


def ndcg(recommended, truth, k) -> float:
    """Binary-relevance NDCG@k with a log2 rank discount."""
    if not truth:
        raise ValueError("ndcg undefined for empty truth set")
    truth = set(truth)
    top = list(recommended)[:k]
    dcg = sum(
        1.0 / math.log2(rank + 1)
        for rank, link in enumerate(top, start=1)
        if link in truth
    )
    ideal = sum(1.0 / math.log2(rank + 1) for rank in range(1, min(len(truth), k) + 1))
    return dcg / ideal


def score_recommendations(recommended, truth, k) -> RecMetrics:
    """Both top-k metrics for one ranked link list."""
    return RecMetrics(
        hr=hit_ratio(recommended, truth, k),
        ndcg=ndcg(recommended, truth, k),
        k=k,
    )


# ---------------------------------------------------------------------------
# benchmark harness


@dataclass
class BenchmarkConfig:
    scorer: object                 # callable SRPair -> probability
    base_scorer: object = None     # pre-fine-tuning scorer (no-finetune variant)
    variant: str = "full"          # full | no-iter | no-finetune | keep1
    alpha_keep: float = 1.5
    split_rule: str = "sorted_id"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.variant not in ("full", "no-iter", "no-finetune", "keep1"):
            raise ValueError(f"unknown benchmark variant {self.variant!r}")
        if self.variant == "no-finetune" and self.base_scorer is None:
            raise ValueError("no-finetune variant requires base_scorer")


def one_pass_topk(instance: RecTestInstance, k, scorer):
    """Score every 1-1 link directly and keep the top k (no iterations)."""
    links = [
        (s, r) for s in instance.senders for r in instance.receivers
    ]
    scores = [scorer(SRPair(senders=(s,), receivers=(r,))) for s, r in links]
    order = np.argsort(-np.asarray(scores), kind="stable")[:k]
    return [links[i] for i in order]


def recommend_links(instance: RecTestInstance, k, config: BenchmarkConfig, seed):
    """Ranked (sender, receiver) list for one instance under one variant."""
    if config.variant == "no-iter":
        return one_pass_topk(instance, k, config.scorer)
    scorer = config.base_scorer if config.variant == "no-finetune" else config.scorer
    alpha = 1.0 if config.variant == "keep1" else config.alpha_keep
    result = rev_filter(
        instance.initial_pair,
        FilterConfig(k=k, alpha_keep=alpha, split_rule=config.split_rule, seed=seed),
        scorer,
    )
    return [(sr.senders[0], sr.receivers[0]) for sr, _ in result.links]


def run_benchmark(dataset, settings, n_instances, config: BenchmarkConfig):
    """Mean HR/NDCG (with standard errors) per (n+, n-, k) setting.

    ``dataset`` provides .graph and .subgraphs. Instance i of every setting
    uses seed config.seed + i, so tables are reproducible and instances are
    shared across variants run with the same seed.
    """
    plus_pool, minus_pool = boundary_pools(dataset.subgraphs, dataset.graph)
    results = {}
    for n_plus, n_minus, k in settings:
        def run_one(i):
            seed_i = config.seed + i
            instance = _instance_from_pools(
                plus_pool, minus_pool, n_plus, n_minus, seed_i
            )
            links = recommend_links(instance, k, config, seed_i)
            return score_recommendations(links, instance.truth_links, k), instance.density

        rows = parallel_map(run_one, range(n_instances), config.threads)
        hrs = np.array([m.hr for m, _ in rows])
        ndcgs = np.array([m.ndcg for m, _ in rows])
        densities = np.array([d for _, d in rows])
        se = lambda a: float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else 0.0
        results[f"{n_plus}+{n_minus}@{k}"] = {
            "hr_mean": float(hrs.mean()),
            "hr_se": se(hrs),
            "ndcg_mean": float(ndcgs.mean()),
            "ndcg_se": se(ndcgs),
            "density_mean": float(densities.mean()),
        }
    return results


def parse_setting(text: str):
    """Parse "1+5@1" into (n_plus, n_minus, k)."""
    try:
        plus_part, k_part = text.split("@")
        n_plus, n_minus = plus_part.split("+")
        return int(n_plus), int(n_minus), int(k_part)
    except ValueError as exc:
        raise ValueError(f"bad setting {text!r}; expected like '1+5@1'") from exc
