"""Minimal neural kernel: dense layers, set encoders, exact backprop, Adam.

Everything runs on float64 numpy arrays. Two binary classifiers are built
from these pieces: a Deep Sets model (one permutation-invariant encoder per
side, concatenated, then an MLP head) and a bipartite model (one GIN-style
message round on the fully connected sender->receiver digraph, pooled).
Gradients are computed by hand-written reverse passes and are exact up to
floating point; see the finite-difference tests.
"""

import json
from dataclasses import dataclass, field

import numpy as np

PROB_CLAMP = 1e-7
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    """Input dimension does not match the parameter shapes."""


# ---------------------------------------------------------------------------
# dense layers


@dataclass
class MlpParams:
    """Affine layer stack. weights[i] is (out, in), biases[i] is (out,)."""

    weights: list
    biases: list
    activations: list  # "relu" | "identity", one per layer

    def dims(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]


def init_mlp(rng, dims, activations):
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=weights, biases=biases, activations=list(activations))


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name, z, da):
    if name == "relu":
        return da * (z > 0)
    return da


def mlp_forward(params: MlpParams, x, cache=None):
    """Apply the layer stack to a vector or a row-matrix of inputs."""
    single = np.ndim(x) == 1
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if a.shape[1] != params.weights[0].shape[1]:
        raise ShapeError(
            f"input dim {a.shape[1]} != expected {params.weights[0].shape[1]}"
        )
    for i, (w, b, act) in enumerate(
        zip(params.weights, params.biases, params.activations)
    ):
        z = a @ w.T + b
        if cache is not None:
            cache.append((a, z))
        a = _act(act, z)
    return a[0] if single else a


def mlp_backward(params: MlpParams, cache, d_out):
    """Backprop through the stack; returns (grads, d_input).

    ``grads`` mirrors params as (d_weights list, d_biases list); ``d_out``
    is the gradient w.r.t. the stack output, shaped like it.
    """
    d_a = np.atleast_2d(d_out)
    d_ws = [None] * len(params.weights)
    d_bs = [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        a_prev, z = cache[i]
        d_z = _act_grad(params.activations[i], z, d_a)
        d_ws[i] = d_z.T @ a_prev
        d_bs[i] = d_z.sum(axis=0)
        d_a = d_z @ params.weights[i]
    return (d_ws, d_bs), d_a


# ---------------------------------------------------------------------------
# set encoders


@dataclass
class DeepSetsParams:
    """Per-element encoder, permutation-invariant pool, post-pool map."""

    phi: MlpParams
    pool: str  # "sum" | "mean"
    rho: MlpParams


def _pool(kind, rows):
    if kind == "sum":
        return rows.sum(axis=0)
    if kind == "mean":
        return rows.mean(axis=0)
    raise ValueError(f"unknown pool {kind!r}")


def deepsets_embed(params: DeepSetsParams, elements, cache=None):
    """rho(pool(phi(e) for e in elements)); invariant to element order."""
    x = np.atleast_2d(np.asarray(elements, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("deepsets_embed requires a nonempty element set")
    phi_cache = [] if cache is not None else None
    u = mlp_forward(params.phi, x, phi_cache)
    pooled = _pool(params.pool, u)
    rho_cache = [] if cache is not None else None
    out = mlp_forward(params.rho, pooled, rho_cache)
    if cache is not None:
        cache["phi"] = phi_cache
        cache["rho"] = rho_cache
        cache["n"] = x.shape[0]
    return out


def deepsets_backward(params: DeepSetsParams, cache, d_out):
    rho_grads, d_pooled = mlp_backward(params.rho, cache["rho"], d_out)
    n = cache["n"]
    d_u = np.repeat(np.atleast_2d(d_pooled), n, axis=0)
    if params.pool == "mean":
        d_u = d_u / n
    phi_grads, _ = mlp_backward(params.phi, cache["phi"], d_u)
    return phi_grads, rho_grads


@dataclass
class BipartiteParams:
    """One message round on the fully connected sender->receiver digraph.

    Receivers aggregate the sum of sender features; senders have empty
    in-neighborhoods. Both sides pass through a shared GIN-style update MLP,
    are pooled by ``readout``, and mapped by ``head`` to the embedding.
    """

    epsilon: float
    node_mlp: MlpParams
    readout: str  # "sum" | "mean" | "max"
    head: MlpParams


def bipartite_embed(params: BipartiteParams, senders, receivers, cache=None):
    xs = np.atleast_2d(np.asarray(senders, dtype=np.float64))
    xr = np.atleast_2d(np.asarray(receivers, dtype=np.float64))
    if xs.shape[0] == 0 or xr.shape[0] == 0:
        raise ValueError("bipartite_embed requires nonempty sender and receiver sets")
    s_sum = xs.sum(axis=0)
    z_in = np.vstack([(1.0 + params.epsilon) * xs, (1.0 + params.epsilon) * xr + s_sum])
    mlp_cache = [] if cache is not None else None
    states = mlp_forward(params.node_mlp, z_in, mlp_cache)
    if params.readout == "sum":
        pooled = states.sum(axis=0)
    elif params.readout == "mean":
        pooled = states.mean(axis=0)
    elif params.readout == "max":
        pooled = states.max(axis=0)
    else:
        raise ValueError(f"unknown readout {params.readout!r}")
    head_cache = [] if cache is not None else None
    out = mlp_forward(params.head, pooled, head_cache)
    if cache is not None:
        cache["node_mlp"] = mlp_cache
        cache["head"] = head_cache
        cache["states"] = states
        cache["counts"] = (xs.shape[0], xr.shape[0])
    return out


def bipartite_backward(params: BipartiteParams, cache, d_out):
    head_grads, d_pooled = mlp_backward(params.head, cache["head"], d_out)
    states = cache["states"]
    n_total = states.shape[0]
    d_pooled = np.atleast_2d(d_pooled)
    if params.readout == "sum":
        d_states = np.repeat(d_pooled, n_total, axis=0)
    elif params.readout == "mean":
        d_states = np.repeat(d_pooled, n_total, axis=0) / n_total
    else:  # max: route each component to its argmax row
        d_states = np.zeros_like(states)
        winners = states.argmax(axis=0)
        d_states[winners, np.arange(states.shape[1])] = d_pooled[0]
    mlp_grads, _ = mlp_backward(params.node_mlp, cache["node_mlp"], d_states)
    return mlp_grads, head_grads


# ---------------------------------------------------------------------------
# loss


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def bce_loss(p, y):
    """Binary cross-entropy with probabilities clamped away from {0, 1}."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    val = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(val) if val.ndim == 0 else val


# ---------------------------------------------------------------------------
# classifier models


@dataclass
class DsClassifier:
    """Two Deep Sets encoders, MLP trunk on their concatenation, logit layer."""

    sender_enc: DeepSetsParams
    receiver_enc: DeepSetsParams
    trunk: MlpParams
    logit: MlpParams
    config: dict = field(default_factory=dict)

    arch = "ds"

    def named_mlps(self):
        return [
            ("sender_phi", self.sender_enc.phi),
            ("sender_rho", self.sender_enc.rho),
            ("receiver_phi", self.receiver_enc.phi),
            ("receiver_rho", self.receiver_enc.rho),
            ("trunk", self.trunk),
            ("logit", self.logit),
        ]


@dataclass
class BpClassifier:
    """Bipartite message-round encoder plus a logit layer."""

    core: BipartiteParams
    logit: MlpParams
    config: dict = field(default_factory=dict)

    arch = "bp"

    def named_mlps(self):
        return [
            ("node_mlp", self.core.node_mlp),
            ("head", self.core.head),
            ("logit", self.logit),
        ]


def build_ds_model(rng, feature_dim, hidden_dim=64, pool="sum"):
    h = hidden_dim
    enc = lambda: DeepSetsParams(
        phi=init_mlp(rng, [feature_dim, h, h], ["relu", "relu"]),
        pool=pool,
        rho=init_mlp(rng, [h, h], ["relu"]),
    )
    sender_enc = enc()
    receiver_enc = enc()
    trunk = init_mlp(rng, [2 * h, h, h], ["relu", "relu"])
    logit = init_mlp(rng, [h, 1], ["identity"])
    config = {
        "arch": "ds",
        "feature_dim": feature_dim,
        "hidden_dim": hidden_dim,
        "pool": pool,
    }
    return DsClassifier(sender_enc, receiver_enc, trunk, logit, config)


def build_bp_model(rng, feature_dim, hidden_dim=64, readout="sum", epsilon=0.0):
    h = hidden_dim
    core = BipartiteParams(
        epsilon=epsilon,
        node_mlp=init_mlp(rng, [feature_dim, h, h], ["relu", "relu"]),
        readout=readout,
        head=init_mlp(rng, [h, h], ["relu"]),
    )
    logit = init_mlp(rng, [h, 1], ["identity"])
    config = {
        "arch": "bp",
        "feature_dim": feature_dim,
        "hidden_dim": hidden_dim,
        "readout": readout,
        "epsilon": epsilon,
    }
    return BpClassifier(core, logit, config)


def forward_logit(model, sender_feats, receiver_feats, cache=None):
    """Raw classifier output before the sigmoid."""
    if model.arch == "ds":
        c_s = {} if cache is not None else None
        c_r = {} if cache is not None else None
        h_s = deepsets_embed(model.sender_enc, sender_feats, c_s)
        h_r = deepsets_embed(model.receiver_enc, receiver_feats, c_r)
        joint = np.concatenate([h_s, h_r])
        trunk_cache = [] if cache is not None else None
        h_pair = mlp_forward(model.trunk, joint, trunk_cache)
        logit_cache = [] if cache is not None else None
        out = mlp_forward(model.logit, h_pair, logit_cache)
        if cache is not None:
            cache.update(
                sender=c_s, receiver=c_r, trunk=trunk_cache, logit=logit_cache,
                split=h_s.shape[0],
            )
        return float(out[0])
    c_core = {} if cache is not None else None
    emb = bipartite_embed(model.core, sender_feats, receiver_feats, c_core)
    logit_cache = [] if cache is not None else None
    out = mlp_forward(model.logit, emb, logit_cache)
    if cache is not None:
        cache.update(core=c_core, logit=logit_cache)
    return float(out[0])


def score_pair(model, sender_feats, receiver_feats):
    return float(sigmoid(forward_logit(model, sender_feats, receiver_feats)))


def _backward_one(model, cache, d_logit):
    """Gradient lists in parameters() order for one pair."""
    if model.arch == "ds":
        grads = {}
        (d_ws, d_bs), d_hpair = mlp_backward(model.logit, cache["logit"], np.array([d_logit]))
        grads["logit"] = (d_ws, d_bs)
        trunk_grads, d_joint = mlp_backward(model.trunk, cache["trunk"], d_hpair)
        grads["trunk"] = trunk_grads
        k = cache["split"]
        d_hs, d_hr = d_joint[0, :k], d_joint[0, k:]
        s_phi, s_rho = deepsets_backward(model.sender_enc, cache["sender"], d_hs)
        r_phi, r_rho = deepsets_backward(model.receiver_enc, cache["receiver"], d_hr)
        grads["sender_phi"] = s_phi
        grads["sender_rho"] = s_rho
        grads["receiver_phi"] = r_phi
        grads["receiver_rho"] = r_rho
    else:
        grads = {}
        (d_ws, d_bs), d_emb = mlp_backward(model.logit, cache["logit"], np.array([d_logit]))
        grads["logit"] = (d_ws, d_bs)
        mlp_grads, head_grads = bipartite_backward(model.core, cache["core"], d_emb)
        grads["node_mlp"] = mlp_grads
        grads["head"] = head_grads
    flat = []
    for name, mlp in model.named_mlps():
        d_ws, d_bs = grads[name]
        for dw, db in zip(d_ws, d_bs):
            flat.extend([dw, db])
    return flat


def parameters(model):
    """Live parameter arrays in canonical order."""
    out = []
    for _, mlp in model.named_mlps():
        for w, b in zip(mlp.weights, mlp.biases):
            out.extend([w, b])
    return out


def set_parameters(model, arrays):
    i = 0
    for _, mlp in model.named_mlps():
        for j in range(len(mlp.weights)):
            mlp.weights[j] = arrays[i]
            mlp.biases[j] = arrays[i + 1]
            i += 2


def backward(model, batch, pos_weight=1.0):
    """Mean-BCE loss and its exact gradients over a batch.

    ``batch`` is a list of (sender_feats, receiver_feats, label) triples.
    Gradients are accumulated in batch-index order so results are bitwise
    reproducible. Returns (loss, grads) with grads in parameters() order.
    """
    n = len(batch)
    totals = [np.zeros_like(p) for p in parameters(model)]
    loss = 0.0
    for xs, xr, y in batch:
        cache = {}
        z = forward_logit(model, xs, xr, cache)
        p = sigmoid(z)
        w = pos_weight if y == 1 else 1.0
        loss += w * bce_loss(p, y)
        pc = min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)
        d_logit = w * (pc - y) / n
        for acc, g in zip(totals, _backward_one(model, cache, d_logit)):
            acc += g
    return loss / n, totals


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(state: AdamState, params, grads):
    """Bias-corrected Adam update; returns the new parameter arrays."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        m_hat = state.m[i] / (1 - b1**t)
        v_hat = state.v[i] / (1 - b2**t)
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out


# ---------------------------------------------------------------------------
# checkpoints


def model_to_checkpoint(model) -> dict:
    weights = {}
    for name, mlp in model.named_mlps():
        for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            weights[f"{name}.w{i}"] = w.ravel().tolist()
            weights[f"{name}.b{i}"] = b.ravel().tolist()
    return {
        "version": CHECKPOINT_VERSION,
        "arch": model.arch,
        "config": dict(model.config),
        "weights": weights,
    }


def checkpoint_to_model(ckpt: dict):
    if ckpt.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {ckpt.get('version')!r}")
    cfg = ckpt["config"]
    rng = np.random.default_rng(0)  # shapes only; weights are overwritten
    if ckpt["arch"] == "ds":
        model = build_ds_model(
            rng, cfg["feature_dim"], cfg["hidden_dim"], cfg.get("pool", "sum")
        )
    elif ckpt["arch"] == "bp":
        model = build_bp_model(
            rng,
            cfg["feature_dim"],
            cfg["hidden_dim"],
            cfg.get("readout", "sum"),
            cfg.get("epsilon", 0.0),
        )
    else:
        raise ValueError(f"unknown arch {ckpt['arch']!r}")
    for name, mlp in model.named_mlps():
        for i in range(len(mlp.weights)):
            w_flat = np.asarray(ckpt["weights"][f"{name}.w{i}"], dtype=np.float64)
            mlp.weights[i] = w_flat.reshape(mlp.weights[i].shape)
            mlp.biases[i] = np.asarray(
                ckpt["weights"][f"{name}.b{i}"], dtype=np.float64
            )
    model.config = dict(cfg)
    return model


def save_checkpoint(path, model):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_checkpoint(model), fh)
        fh.write("\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        return checkpoint_to_model(json.load(fh))


def clone_model(model):
    return checkpoint_to_model(model_to_checkpoint(model))


def assert_finite(model):
    for p in parameters(model):
        if not np.all(np.isfinite(p)):
            raise FloatingPointError("non-finite value in model parameters")
