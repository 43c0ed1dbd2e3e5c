"""Boundary-pair classification: dataset assembly, splits, training, metrics.

A labeled subgraph is reduced to the pair (sender set, receiver set) of its
boundary; the classifier never sees the subgraph interior. Per-node feature
vectors are fetched once and kept in a hash map so repeated scoring reuses
them.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import neural_core as nc
from .graph_core import SUBGRAPH_SUSPICIOUS, extract_boundary


class TrainingError(RuntimeError):
    """Raised when optimization diverges."""


@dataclass(frozen=True, order=True)
class SRPair:
    """A (sender set, receiver set) pair; node ids, kept sorted."""

    senders: tuple
    receivers: tuple

    def __post_init__(self):
        object.__setattr__(self, "senders", tuple(sorted(self.senders)))
        object.__setattr__(self, "receivers", tuple(sorted(self.receivers)))

    @property
    def is_one_one(self) -> bool:
        return len(self.senders) == 1 and len(self.receivers) == 1


@dataclass
class LabeledPair:
    sr: SRPair
    label: int  # 0 licit, 1 suspicious
    origin: str = ""


@dataclass
class SplitSpec:
    train_frac: float = 0.8
    valid_frac: float = 0.1
    test_frac: float = 0.1
    seed: int = 0
    few_shot_fraction: float = 1.0

    def __post_init__(self):
        if abs(self.train_frac + self.valid_frac + self.test_frac - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if not 0.0 < self.few_shot_fraction <= 1.0:
            raise ValueError("few_shot_fraction must be in (0, 1]")


@dataclass
class ClassifierMetrics:
    pr_auc: float
    f1: float
    threshold: float


@dataclass
class TrainConfig:
    hidden_dim: int = 64
    pool: str = "sum"          # ds
    readout: str = "sum"       # bp
    epsilon: float = 0.0       # bp
    lr: float = 1e-3
    batch_size: int = 256
    epochs: int = 150
    patience: int = 20
    pos_weight: float = 1.0
    seed: int = 0


class FeatureMap:
    """Hash map of node id -> feature vector, filled lazily from the graph."""

    def __init__(self, graph):
        self._graph = graph
        self._cache = {}

    def get(self, node: int) -> np.ndarray:
        vec = self._cache.get(node)
        if vec is None:
            vec = np.array(self._graph.features[node], dtype=np.float64)
            self._cache[node] = vec
        return vec

    def matrix(self, nodes) -> np.ndarray:
        return np.stack([self.get(n) for n in nodes])

    @property
    def dim(self) -> int:
        return self._graph.feature_dim

    def __len__(self):
        return len(self._cache)


def make_pairs(graph, subgraphs, feature_map=None):
    """Boundary pairs for every labeled subgraph with a nonempty boundary.

    Returns (pairs, feature_map, stats); stats counts skipped subgraphs.
    """
    if feature_map is None:
        feature_map = FeatureMap(graph)
    pairs = []
    stats = {"empty_boundary": 0, "unlabeled": 0}
    for sg in subgraphs:
        if sg.label is None:
            stats["unlabeled"] += 1
            continue
        b = extract_boundary(graph, sg)
        if b.has_empty_boundary:
            stats["empty_boundary"] += 1
            continue
        sr = SRPair(senders=tuple(b.senders), receivers=tuple(b.receivers))
        for node in sr.senders + sr.receivers:
            feature_map.get(node)
        pairs.append(
            LabeledPair(sr=sr, label=int(sg.label == SUBGRAPH_SUSPICIOUS), origin=sg.id)
        )
    return pairs, feature_map, stats


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split(pairs, spec: SplitSpec):
    """Stratified seeded split into (train, valid, test).

    Each class is shuffled once; validation and test take rounded fractions
    (at least one element per split when the class has three or more
    members, prioritizing train, then test). The few-shot fraction then
    keeps a prefix of each class of train, so smaller fractions are nested
    inside larger ones under the same seed.
    """
    if len(pairs) < 10:
        raise ValueError(f"need at least 10 pairs to split, got {len(pairs)}")
    if not any(p.label == 1 for p in pairs):
        raise ValueError("no positive pairs; cannot build a labeled split")
    rng = np.random.default_rng(spec.seed)
    train, valid, test = [], [], []
    for label in (1, 0):
        group = [p for p in pairs if p.label == label]
        if not group:
            continue
        order = rng.permutation(len(group))
        shuffled = [group[i] for i in order]
        n = len(group)
        n_valid = _round_half_up(spec.valid_frac * n)
        n_test = _round_half_up(spec.test_frac * n)
        if n >= 3:
            n_valid = max(n_valid, 1)
            n_test = max(n_test, 1)
            while n - n_valid - n_test < 1:
                if n_valid >= n_test and n_valid > 1:
                    n_valid -= 1
                else:
                    n_test -= 1
        elif n == 2:
            n_valid, n_test = 0, 1
        else:
            n_valid, n_test = 0, 0
        valid.extend(shuffled[:n_valid])
        test.extend(shuffled[n_valid : n_valid + n_test])
        train.extend(shuffled[n_valid + n_test :])
    if spec.few_shot_fraction < 1.0:
        train = few_shot_subsample(train, spec.few_shot_fraction)
    return train, valid, test


def few_shot_subsample(train, fraction):
    """Per-class prefix of size round-half-up(fraction * class size), min 1."""
    out = []
    for label in (1, 0):
        group = [p for p in train if p.label == label]
        if not group:
            continue
        keep = min(len(group), max(1, _round_half_up(fraction * len(group))))
        out.extend(group[:keep])
    return out


# ---------------------------------------------------------------------------
# metrics


def average_precision(scores, labels):
    """Step-interpolated average precision over the score-ranked list.

    Ties keep their input order (stable sort), so rankings are reproducible.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("average precision undefined without positives")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    cum_pos = np.cumsum(ranked)
    precision_at = cum_pos / np.arange(1, len(ranked) + 1)
    return float((precision_at * ranked).sum() / n_pos)


def f1_at_threshold(scores, labels, threshold=0.5):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    preds = scores >= threshold
    tp = int(np.sum(preds & (labels == 1)))
    fp = int(np.sum(preds & (labels == 0)))
    fn = int(np.sum(~preds & (labels == 1)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


# ---------------------------------------------------------------------------
# scoring


class PairScorer:
    """Scores SRPairs against a fixed model, reusing per-node work.

    For the set-encoder architecture the per-element encoding of each node
    is cached on first use, which makes large batches of small pairs (the
    filtering workloads) much cheaper.
    """

    def __init__(self, model, feature_map: FeatureMap):
        self.model = model
        self.features = feature_map
        self.calls = 0
        self._phi_cache = {}

    def _phi_rows(self, nodes, params):
        rows = []
        for n in nodes:
            key = (id(params), n)
            row = self._phi_cache.get(key)
            if row is None:
                row = nc.mlp_forward(params.phi, self.features.get(n))
                self._phi_cache[key] = row
            rows.append(row)
        return np.stack(rows)

    def score(self, sr: SRPair) -> float:
        self.calls += 1
        if self.model.arch == "ds":
            enc_s, enc_r = self.model.sender_enc, self.model.receiver_enc
            pooled_s = nc._pool(enc_s.pool, self._phi_rows(sr.senders, enc_s))
            pooled_r = nc._pool(enc_r.pool, self._phi_rows(sr.receivers, enc_r))
            h_s = nc.mlp_forward(enc_s.rho, pooled_s)
            h_r = nc.mlp_forward(enc_r.rho, pooled_r)
            h_pair = nc.mlp_forward(self.model.trunk, np.concatenate([h_s, h_r]))
            logit = nc.mlp_forward(self.model.logit, h_pair)[0]
            return float(nc.sigmoid(logit))
        xs = self.features.matrix(sr.senders)
        xr = self.features.matrix(sr.receivers)
        return nc.score_pair(self.model, xs, xr)

    def score_many(self, srs) -> np.ndarray:
        return np.array([self.score(sr) for sr in srs])

    def __call__(self, sr: SRPair) -> float:
        return self.score(sr)


def score(model, sr: SRPair, feature_map: FeatureMap) -> float:
    """Probability that the pair bounds a suspicious flow."""
    if not sr.senders or not sr.receivers:
        raise ValueError("cannot score a pair with an empty side")
    return PairScorer(model, feature_map).score(sr)


# ---------------------------------------------------------------------------
# training


def _as_batch(pairs, feature_map):
    return [
        (feature_map.matrix(p.sr.senders), feature_map.matrix(p.sr.receivers), p.label)
        for p in pairs
    ]


def _validation_metric(model, valid_batch):
    """Validation PR-AUC when defined, otherwise negative mean loss."""
    labels = [y for _, _, y in valid_batch]
    scores, loss = [], 0.0
    for xs, xr, y in valid_batch:
        p = nc.sigmoid(nc.forward_logit(model, xs, xr))
        scores.append(p)
        loss += nc.bce_loss(p, y)
    if 0 < sum(labels) < len(labels):
        return average_precision(scores, labels)
    return -loss / max(len(valid_batch), 1)


def train_model(model, train_pairs, valid_pairs, feature_map, config: TrainConfig):
    """Adam/BCE training with early stopping on the validation metric.

    Returns (best_model, history). Deterministic for a fixed config: batch
    order comes from a seeded shuffle and gradients accumulate in batch
    index order.
    """
    if not train_pairs:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed + 1)
    train_batchable = _as_batch(train_pairs, feature_map)
    valid_batch = _as_batch(valid_pairs, feature_map)

    state = nc.init_adam(nc.parameters(model), lr=config.lr)
    best_metric = -np.inf
    best_ckpt = nc.model_to_checkpoint(model)
    best_epoch = -1
    history = []

    for epoch in range(config.epochs):
        order = rng.permutation(len(train_batchable))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [train_batchable[i] for i in order[start : start + config.batch_size]]
            loss, grads = nc.backward(model, batch, pos_weight=config.pos_weight)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"loss became non-finite at epoch {epoch}; "
                    f"last finite epoch {epoch - 1}"
                )
            epoch_loss += loss * len(batch)
            nc.set_parameters(model, nc.adam_step(state, nc.parameters(model), grads))
        metric = (
            _validation_metric(model, valid_batch)
            if valid_batch
            else -epoch_loss / len(train_batchable)
        )
        history.append(
            {"epoch": epoch, "train_loss": epoch_loss / len(train_batchable),
             "valid_metric": metric}
        )
        if metric > best_metric:
            best_metric = metric
            best_ckpt = nc.model_to_checkpoint(model)
            best_epoch = epoch
        else:
            if metric == best_metric:
                # ties favor the longer-trained weights: the validation
                # metric saturates early on separable data while margins
                # (and the rarely-exercised feature channels) keep improving
                best_ckpt = nc.model_to_checkpoint(model)
            if epoch - best_epoch >= config.patience:
                break
    best = nc.checkpoint_to_model(best_ckpt)
    nc.assert_finite(best)
    return best, history


def train(arch, train_pairs, valid_pairs, feature_map, config: TrainConfig = None):
    """Train a fresh classifier of the given architecture ("ds" or "bp")."""
    config = config or TrainConfig()
    if not any(p.label == 1 for p in train_pairs) or not any(
        p.label == 0 for p in train_pairs
    ):
        raise ValueError("training set must contain both classes")
    rng = np.random.default_rng(config.seed)
    if arch == "ds":
        model = nc.build_ds_model(rng, feature_map.dim, config.hidden_dim, config.pool)
    elif arch == "bp":
        model = nc.build_bp_model(
            rng, feature_map.dim, config.hidden_dim, config.readout, config.epsilon
        )
    else:
        raise ValueError(f"unknown architecture {arch!r}")
    return train_model(model, train_pairs, valid_pairs, feature_map, config)


def evaluate(model, test_pairs, feature_map, threshold=0.5) -> ClassifierMetrics:
    """PR-AUC (average precision) and F1 at a fixed threshold on test pairs."""
    if not test_pairs:
        raise ValueError("empty test set")
    labels = [p.label for p in test_pairs]
    if len(set(labels)) < 2:
        raise ValueError("PR-AUC undefined on a single-class test set")
    scorer = PairScorer(model, feature_map)
    scores = scorer.score_many([p.sr for p in test_pairs])
    return ClassifierMetrics(
        pr_auc=average_precision(scores, labels),
        f1=f1_at_threshold(scores, labels, threshold),
        threshold=threshold,
    )
