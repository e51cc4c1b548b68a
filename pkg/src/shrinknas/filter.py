"""The path filter: operation embeddings + bidirectional LSTM + MLP head.

Maps an architecture (tuple of op indices) to the probability it is a
weak path.  Forward, analytic backward, and Adam updates are written
directly in numpy, float64 throughout, so gradients can be audited
against finite differences and runs are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .serialization import arrays_to_obj, dump_json, load_json, obj_to_arrays

# decoupled weight decay touches dense weights only; decaying embeddings
# would drag the cosine-similarity merge signal toward the origin
DECAYED = ("lstm_f/Wx", "lstm_f/Wh", "lstm_b/Wx", "lstm_b/Wh",
           "proj_f/W", "proj_b/W", "head/W1", "head/W2")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class FilterNet:
    """All trainable parameters plus forward/backward over architecture batches."""

    def __init__(self, num_layers, num_ops, hidden=128, seed=0):
        self.num_layers = int(num_layers)
        self.num_ops = int(num_ops)
        self.hidden = int(hidden)
        self.seed = int(seed)
        self.params = self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng):
        L, N, H = self.num_layers, self.num_ops, self.hidden
        s = 1.0 / np.sqrt(H)
        p = {"emb": rng.uniform(-0.1, 0.1, size=(L, N, H))}
        for d in ("f", "b"):
            p[f"lstm_{d}/Wx"] = rng.uniform(-s, s, size=(H, 4 * H))
            p[f"lstm_{d}/Wh"] = rng.uniform(-s, s, size=(H, 4 * H))
            b = np.zeros(4 * H)
            b[H:2 * H] = 1.0  # forget gate bias
            p[f"lstm_{d}/b"] = b
        p["proj_f/W"] = rng.uniform(-s, s, size=(H, H))
        p["proj_b/W"] = rng.uniform(-s, s, size=(H, H))
        p["head/W1"] = rng.uniform(-s, s, size=(H, H))
        p["head/b1"] = np.zeros(H)
        p["head/W2"] = rng.uniform(-s, s, size=(H, 1))
        p["head/b2"] = np.zeros(1)
        return p

    def num_params(self):
        return sum(int(a.size) for a in self.params.values())

    def zero_grads(self):
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def copy(self):
        clone = FilterNet.__new__(FilterNet)
        clone.num_layers, clone.num_ops = self.num_layers, self.num_ops
        clone.hidden, clone.seed = self.hidden, self.seed
        clone.params = {k: v.copy() for k, v in self.params.items()}
        return clone

    # -- embedding access ----------------------------------------------------

    def embedding_of(self, layer, op):
        if not (0 <= layer < self.num_layers and 0 <= op < self.num_ops):
            raise IndexError(f"(layer={layer}, op={op}) outside "
                             f"({self.num_layers}, {self.num_ops})")
        return self.params["emb"][layer, op]

    def embed(self, archs):
        """(B, L, H) embedded sequences for a batch of architectures."""
        ops = np.asarray(archs, dtype=np.int64)
        if ops.ndim == 1:
            ops = ops[None, :]
        if ops.shape[1] != self.num_layers or ops.min() < 0 or ops.max() >= self.num_ops:
            raise ValueError("architecture batch does not match net dimensions")
        return self.params["emb"][np.arange(self.num_layers)[None, :], ops], ops

    # -- forward -------------------------------------------------------------

    def _lstm_forward(self, xs, direction):
        """xs: list of L arrays (B, H) in processing order. Returns final h + cache."""
        p = self.params
        Wx, Wh, b = p[f"lstm_{direction}/Wx"], p[f"lstm_{direction}/Wh"], p[f"lstm_{direction}/b"]
        H = self.hidden
        B = xs[0].shape[0]
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        steps = []
        for x in xs:
            z = x @ Wx + h @ Wh + b
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = _sigmoid(z[:, 3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            steps.append((x, h, c, i, f, g, o, tc))
            h = o * tc
            c = c_new
        return h, steps

    def forward_embedded(self, A):
        """Forward from embedded sequences A (B, L, H); returns (phi, cache)."""
        p = self.params
        L = self.num_layers
        xs_f = [A[:, t] for t in range(L)]
        xs_b = [A[:, L - 1 - t] for t in range(L)]
        hf, steps_f = self._lstm_forward(xs_f, "f")
        hb, steps_b = self._lstm_forward(xs_b, "b")
        fa = hf @ p["proj_f/W"] + hb @ p["proj_b/W"]
        r_pre = fa @ p["head/W1"] + p["head/b1"]
        r = np.maximum(r_pre, 0.0)
        y = (r @ p["head/W2"] + p["head/b2"])[:, 0]
        phi = _sigmoid(y)
        cache = {"steps_f": steps_f, "steps_b": steps_b, "hf": hf, "hb": hb,
                 "fa": fa, "r_pre": r_pre, "r": r, "phi": phi, "B": A.shape[0]}
        return phi, cache

    def forward(self, archs):
        """Batch forward; order-preserving, identical to per-item forward."""
        A, ops = self.embed(archs)
        phi, cache = self.forward_embedded(A)
        cache["ops"] = ops
        return phi, cache

    def predict(self, archs):
        return self.forward(archs)[0]

    def forward_mixed(self, archs_pos, archs_unl, gamma):
        """Forward on gamma * A(pos) + (1 - gamma) * A(unl), per pair.

        gamma: scalar or (B,) array in [0, 1].
        """
        A_pos, ops_pos = self.embed(archs_pos)
        A_unl, ops_unl = self.embed(archs_unl)
        gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
        if gamma.min() < 0.0 or gamma.max() > 1.0:
            raise ValueError("mix weight must lie in [0, 1]")
        A_mix = gamma[:, None, None] * A_pos + (1.0 - gamma)[:, None, None] * A_unl
        phi, cache = self.forward_embedded(A_mix)
        cache["mix"] = (ops_pos, ops_unl, gamma)
        return phi, cache

    # -- backward ------------------------------------------------------------

    def _lstm_backward(self, steps, dh_last, direction):
        p = self.params
        Wx, Wh = p[f"lstm_{direction}/Wx"], p[f"lstm_{direction}/Wh"]
        H = self.hidden
        dWx = np.zeros_like(Wx)
        dWh = np.zeros_like(Wh)
        db = np.zeros(4 * H)
        dh = dh_last
        dc = np.zeros_like(dh_last)
        dxs = [None] * len(steps)
        for t in range(len(steps) - 1, -1, -1):
            x, h_prev, c_prev, i, f, g, o, tc = steps[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate(
                [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)],
                axis=1,
            )
            dWx += x.T @ dz
            dWh += h_prev.T @ dz
            db += dz.sum(axis=0)
            dxs[t] = dz @ Wx.T
            dh = dz @ Wh.T
            dc = dc * f
        return dWx, dWh, db, dxs

    def backward(self, cache, dphi):
        """Gradients of sum(dphi * phi) wrt all parameters.

        For plain forwards the embedding gradient is scattered into
        "emb"; for mixed forwards the chain rule splits dA between the
        two source architectures by their mix weights.
        """
        p = self.params
        L = self.num_layers
        phi, r, r_pre, fa = cache["phi"], cache["r"], cache["r_pre"], cache["fa"]
        dy = np.asarray(dphi, dtype=float) * phi * (1.0 - phi)
        grads = {}
        grads["head/W2"] = r.T @ dy[:, None]
        grads["head/b2"] = np.array([dy.sum()])
        dr = dy[:, None] @ p["head/W2"].T
        dr_pre = dr * (r_pre > 0)
        grads["head/W1"] = fa.T @ dr_pre
        grads["head/b1"] = dr_pre.sum(axis=0)
        dfa = dr_pre @ p["head/W1"].T
        grads["proj_f/W"] = cache["hf"].T @ dfa
        grads["proj_b/W"] = cache["hb"].T @ dfa
        dhf = dfa @ p["proj_f/W"].T
        dhb = dfa @ p["proj_b/W"].T
        for d, steps, dh in (("f", cache["steps_f"], dhf), ("b", cache["steps_b"], dhb)):
            dWx, dWh, db, dxs = self._lstm_backward(steps, dh, d)
            grads[f"lstm_{d}/Wx"] = dWx
            grads[f"lstm_{d}/Wh"] = dWh
            grads[f"lstm_{d}/b"] = db
            if d == "f":
                dxs_f = dxs
            else:
                dxs_b = dxs
        B = cache["B"]
        dA = np.zeros((B, L, self.hidden))
        for t in range(L):
            dA[:, t] += dxs_f[t]
            dA[:, L - 1 - t] += dxs_b[t]
        demb = np.zeros_like(p["emb"])
        layer_idx = np.broadcast_to(np.arange(L)[None, :], (B, L))
        if "mix" in cache:
            ops_pos, ops_unl, gamma = cache["mix"]
            np.add.at(demb, (layer_idx, ops_pos), gamma[:, None, None] * dA)
            np.add.at(demb, (layer_idx, ops_unl), (1.0 - gamma)[:, None, None] * dA)
        else:
            np.add.at(demb, (layer_idx, cache["ops"]), dA)
        grads["emb"] = demb
        return grads


def accumulate(into, grads, scale=1.0):
    for k, g in grads.items():
        into[k] += scale * g
    return into


@dataclass
class AdamState:
    """Adam moments + hyperparameters (decoupled weight decay on weights only)."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-3
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def init_like(self, net):
        self.m = {k: np.zeros_like(a) for k, a in net.params.items()}
        self.v = {k: np.zeros_like(a) for k, a in net.params.items()}
        return self


def adam_step(net, state, grads):
    """In-place bias-corrected Adam update."""
    if not state.m:
        state.init_like(net)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for k, p in net.params.items():
        g = grads[k]
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if state.weight_decay and k in DECAYED:
            p -= state.lr * state.weight_decay * p


# -- checkpointing -----------------------------------------------------------

def checkpoint_obj(net, adam=None, extra=None):
    doc = {
        "format": "shrinknas-filter-v1",
        "num_layers": net.num_layers,
        "num_ops": net.num_ops,
        "hidden": net.hidden,
        "seed": net.seed,
        "params": arrays_to_obj(net.params),
    }
    if adam is not None:
        doc["adam"] = {
            "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
            "eps": adam.eps, "weight_decay": adam.weight_decay, "step": adam.step,
            "m": arrays_to_obj(adam.m), "v": arrays_to_obj(adam.v),
        }
    if extra:
        doc["extra"] = extra
    return doc


def save_checkpoint(path, net, adam=None, extra=None):
    dump_json(checkpoint_obj(net, adam, extra), path)


def checkpoint_from_obj(doc):
    net = FilterNet.__new__(FilterNet)
    net.num_layers = doc["num_layers"]
    net.num_ops = doc["num_ops"]
    net.hidden = doc["hidden"]
    net.seed = doc["seed"]
    net.params = obj_to_arrays(doc["params"])
    adam = None
    if "adam" in doc:
        a = doc["adam"]
        adam = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"],
                         weight_decay=a["weight_decay"], step=a["step"],
                         m=obj_to_arrays(a["m"]), v=obj_to_arrays(a["v"]))
    return net, adam, doc.get("extra")


def load_checkpoint(path):
    return checkpoint_from_obj(load_json(path))
