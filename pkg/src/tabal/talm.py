"""Table-biased transformer token tagger, written from scratch on numpy.

Attention is restricted by a row/column visibility mask instead of full
attention, positions are encoded only within cells, and all gradients are
hand-derived (verified against finite differences in the test suite).
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field, asdict
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf

from .table_core import Cell, CellRef, Corpus, LabelClass, Table, ValidationError

logger = logging.getLogger(__name__)

N_CLASSES = len(LabelClass)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_TOKEN_RE = re.compile(r"[A-Za-z]+|[0-9]+|[^\sA-Za-z0-9]")


def display_tokens(text: str) -> tuple:
    """Split into letter runs, digit runs and single punctuation marks, case kept."""
    return tuple(_TOKEN_RE.findall(text))


def tokenize(text: str) -> tuple:
    """Vocabulary-form tokens: lowercased, every ASCII digit mapped to '0'."""
    return tuple(re.sub(r"[0-9]", "0", tok.lower()) for tok in display_tokens(text))


def make_cell(text: str) -> Cell:
    return Cell(text=text, tokens=display_tokens(text))


class Vocabulary:
    """Dense token -> id map with reserved PAD (0) and UNK (1) ids."""

    def __init__(self, tokens: Sequence[str]):
        self.id_of = {PAD_TOKEN: 0, UNK_TOKEN: 1}
        for tok in tokens:
            if tok not in self.id_of:
                self.id_of[tok] = len(self.id_of)
        self.tokens = sorted(self.id_of, key=self.id_of.get)

    def __len__(self) -> int:
        return len(self.id_of)

    def lookup(self, token: str) -> int:
        return self.id_of.get(token, 1)

    def encode(self, vocab_tokens: Iterable[str]) -> np.ndarray:
        return np.array([self.lookup(t) for t in vocab_tokens], dtype=np.int64)


def build_vocab(corpus: Corpus) -> Vocabulary:
    """Frequency-then-lexicographic vocabulary over every cell of the corpus."""
    counts: Dict[str, int] = {}
    for table in corpus.tables:
        for ref in table.cell_refs():
            for tok in tokenize(" ".join(table.cell(ref).tokens)):
                counts[tok] = counts.get(tok, 0) + 1
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocabulary(ordered)


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 32
    layers: int = 2
    heads: int = 2
    ffn_dim: int = 64
    max_tokens_per_cell: int = 16
    dropout: float = 0.0

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ValidationError("embed_dim must be divisible by heads")
        if self.max_tokens_per_cell < 1:
            raise ValidationError("max_tokens_per_cell must be >= 1")


def init_parameters(config: ModelConfig, vocab_size: int, seed: int) -> Dict[str, np.ndarray]:
    """Scaled-normal (std 0.02) weights; layer-norm gains 1, biases 0."""
    rng = np.random.Generator(np.random.PCG64(seed))
    d, f = config.embed_dim, config.ffn_dim

    def w(*shape):
        return rng.normal(0.0, 0.02, size=shape)

    params = {
        "tok_emb": w(vocab_size, d),
        "pos_emb": w(config.max_tokens_per_cell, d),
        "ln_f.g": np.ones(d), "ln_f.b": np.zeros(d),
        "w_out": w(N_CLASSES, d), "b_out": np.zeros(N_CLASSES),
    }
    for l in range(config.layers):
        p = f"l{l}."
        params[p + "ln1.g"] = np.ones(d)
        params[p + "ln1.b"] = np.zeros(d)
        params[p + "wq"] = w(d, d)
        params[p + "wk"] = w(d, d)
        params[p + "wv"] = w(d, d)
        params[p + "wo"] = w(d, d)
        params[p + "ln2.g"] = np.ones(d)
        params[p + "ln2.b"] = np.zeros(d)
        params[p + "w1"] = w(d, f)
        params[p + "b1"] = np.zeros(f)
        params[p + "w2"] = w(f, d)
        params[p + "b2"] = np.zeros(d)
    return params


@dataclass
class TablePrep:
    """Tokenized table ready for the encoder."""

    table_id: str
    ids: np.ndarray          # (T,) vocab ids
    pos: np.ndarray          # (T,) within-cell positions
    rows: np.ndarray         # (T,) body row index, -1 for header tokens
    cols: np.ndarray         # (T,) column index
    index_map: list          # T entries of (CellRef, z)
    vis: np.ndarray          # (T, T) bool visibility

    @property
    def n_tokens(self) -> int:
        return len(self.ids)

    def token_slice(self, ref: CellRef) -> list:
        return [i for i, (r, _) in enumerate(self.index_map) if r == ref]


def visibility_from_coords(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Token u attends v iff same (header or body) row or same column."""
    same_row = rows[:, None] == rows[None, :]
    same_col = cols[:, None] == cols[None, :]
    return same_row | same_col


def prepare_table(table: Table, vocab: Vocabulary, config: ModelConfig) -> TablePrep:
    ids: List[int] = []
    pos: List[int] = []
    rows: List[int] = []
    cols: List[int] = []
    index_map: List[Tuple[CellRef, int]] = []
    for ref in table.cell_refs():
        cell = table.cell(ref)
        toks = tokenize(" ".join(cell.tokens))
        if len(toks) > config.max_tokens_per_cell:
            logger.warning("table %s %s: cell truncated from %d to %d tokens",
                           table.table_id, ref, len(toks), config.max_tokens_per_cell)
            toks = toks[:config.max_tokens_per_cell]
        for z, tok in enumerate(toks):
            ids.append(vocab.lookup(tok))
            pos.append(z)
            rows.append(-1 if ref.row is None else ref.row)
            cols.append(ref.col)
            index_map.append((ref, z))
    rows_arr = np.array(rows, dtype=np.int64)
    cols_arr = np.array(cols, dtype=np.int64)
    return TablePrep(
        table_id=table.table_id,
        ids=np.array(ids, dtype=np.int64),
        pos=np.array(pos, dtype=np.int64),
        rows=rows_arr,
        cols=cols_arr,
        index_map=index_map,
        vis=visibility_from_coords(rows_arr, cols_arr),
    )


def visibility_matrix(table: Table, vocab: Optional[Vocabulary] = None,
                      config: Optional[ModelConfig] = None) -> np.ndarray:
    prep = prepare_table(table, vocab or Vocabulary([]), config or ModelConfig())
    return prep.vis


@dataclass
class EncodedTable:
    reps: np.ndarray   # (T, d) final token representations
    index_map: list


@dataclass
class TokenDistributions:
    probs: np.ndarray  # (T, |Y|)
    index_map: list

    def for_cell(self, ref: CellRef) -> np.ndarray:
        idx = [i for i, (r, _) in enumerate(self.index_map) if r == ref]
        return self.probs[idx]


# ---------------------------------------------------------------------------
# forward / backward primitives

_LN_EPS = 1e-5
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _ln_forward(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _ln_backward(dy, g, cache):
    xhat, inv = cache
    dg = (dy * xhat).sum(0)
    db = dy.sum(0)
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    return dx, dg, db


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def _gelu_grad(x):
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def _softmax(x, axis=-1):
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def _split_heads(x, heads):
    t, d = x.shape
    return x.reshape(t, heads, d // heads).transpose(1, 0, 2)  # (H, T, dh)


def _merge_heads(x):
    h, t, dh = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dh)


def _forward(params, prep: TablePrep, config: ModelConfig):
    """Full forward pass; returns (probs, reps, cache for backprop)."""
    x = params["tok_emb"][prep.ids] + params["pos_emb"][prep.pos]
    mask = np.where(prep.vis, 0.0, -np.inf)
    scale = 1.0 / math.sqrt(config.embed_dim // config.heads)
    cache = {"x0": x, "layers": []}
    for l in range(config.layers):
        p = f"l{l}."
        h, ln1c = _ln_forward(x, params[p + "ln1.g"], params[p + "ln1.b"])
        q = _split_heads(h @ params[p + "wq"], config.heads)
        k = _split_heads(h @ params[p + "wk"], config.heads)
        v = _split_heads(h @ params[p + "wv"], config.heads)
        scores = (q @ k.transpose(0, 2, 1)) * scale + mask
        attn = _softmax(scores)
        ctx = _merge_heads(attn @ v)
        x = x + ctx @ params[p + "wo"]
        h2, ln2c = _ln_forward(x, params[p + "ln2.g"], params[p + "ln2.b"])
        u = h2 @ params[p + "w1"] + params[p + "b1"]
        a = _gelu(u)
        x = x + a @ params[p + "w2"] + params[p + "b2"]
        cache["layers"].append({"h": h, "ln1c": ln1c, "q": q, "k": k, "v": v,
                                "attn": attn, "h2": h2, "ln2c": ln2c,
                                "u": u, "a": a})
    reps, lnfc = _ln_forward(x, params["ln_f.g"], params["ln_f.b"])
    logits = reps @ params["w_out"].T + params["b_out"]
    probs = _softmax(logits)
    cache["lnfc"] = lnfc
    cache["reps"] = reps
    cache["probs"] = probs
    cache["scale"] = scale
    return probs, reps, cache


def _backward(params, prep: TablePrep, config: ModelConfig, cache, dlogits):
    """Backprop from d(loss)/d(logits) to gradients for every parameter."""
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    reps = cache["reps"]
    grads["w_out"] = dlogits.T @ reps
    grads["b_out"] = dlogits.sum(0)
    dreps = dlogits @ params["w_out"]
    dx, grads["ln_f.g"], grads["ln_f.b"] = _ln_backward(dreps, params["ln_f.g"], cache["lnfc"])

    heads, scale = config.heads, cache["scale"]
    for l in reversed(range(config.layers)):
        p = f"l{l}."
        c = cache["layers"][l]
        # FFN block
        da = dx @ params[p + "w2"].T
        grads[p + "w2"] = c["a"].T @ dx
        grads[p + "b2"] = dx.sum(0)
        du = da * _gelu_grad(c["u"])
        grads[p + "w1"] = c["h2"].T @ du
        grads[p + "b1"] = du.sum(0)
        dh2 = du @ params[p + "w1"].T
        dx_ln2, grads[p + "ln2.g"], grads[p + "ln2.b"] = _ln_backward(
            dh2, params[p + "ln2.g"], c["ln2c"])
        dx = dx + dx_ln2
        # attention block
        ctx_flat = _merge_heads(c["attn"] @ c["v"])
        grads[p + "wo"] = ctx_flat.T @ dx
        dctx = _split_heads(dx @ params[p + "wo"].T, heads)
        dattn = dctx @ c["v"].transpose(0, 2, 1)
        dv = c["attn"].transpose(0, 2, 1) @ dctx
        dscores = c["attn"] * (dattn - (dattn * c["attn"]).sum(-1, keepdims=True))
        dq = (dscores @ c["k"]) * scale
        dk = (dscores.transpose(0, 2, 1) @ c["q"]) * scale
        dh = (_merge_heads(dq) @ params[p + "wq"].T
              + _merge_heads(dk) @ params[p + "wk"].T
              + _merge_heads(dv) @ params[p + "wv"].T)
        grads[p + "wq"] = c["h"].T @ _merge_heads(dq)
        grads[p + "wk"] = c["h"].T @ _merge_heads(dk)
        grads[p + "wv"] = c["h"].T @ _merge_heads(dv)
        dx_ln1, grads[p + "ln1.g"], grads[p + "ln1.b"] = _ln_backward(
            dh, params[p + "ln1.g"], c["ln1c"])
        dx = dx + dx_ln1

    np.add.at(grads["tok_emb"], prep.ids, dx)
    np.add.at(grads["pos_emb"], prep.pos, dx)
    return grads


# ---------------------------------------------------------------------------
# model object

class TaggerModel:
    """Bundles config, vocabulary and parameters behind the tagging operations."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary,
                 params: Optional[Dict[str, np.ndarray]] = None, seed: int = 0):
        self.config = config
        self.vocab = vocab
        self.params = params if params is not None else init_parameters(config, len(vocab), seed)

    def reinitialize(self, seed: int) -> None:
        self.params = init_parameters(self.config, len(self.vocab), seed)

    def prepare(self, table: Table) -> TablePrep:
        return prepare_table(table, self.vocab, self.config)

    def encode(self, table: Table, prep: Optional[TablePrep] = None) -> EncodedTable:
        prep = prep or self.prepare(table)
        _, reps, _ = _forward(self.params, prep, self.config)
        return EncodedTable(reps=reps, index_map=prep.index_map)

    def predict(self, table: Table, prep: Optional[TablePrep] = None) -> TokenDistributions:
        prep = prep or self.prepare(table)
        probs, _, _ = _forward(self.params, prep, self.config)
        return TokenDistributions(probs=probs, index_map=prep.index_map)

    def loss_and_gradients(self, table: Table, supervised: Mapping,
                           prep: Optional[TablePrep] = None):
        """Mean cross-entropy over tokens of supervised cells, plus all gradients.

        Returns (None, None) when the table has no supervised tokens.
        """
        prep = prep or self.prepare(table)
        targets = np.full(prep.n_tokens, -1, dtype=np.int64)
        for i, (ref, z) in enumerate(prep.index_map):
            tags = supervised.get(ref)
            if tags is not None and z < len(tags):
                targets[i] = int(tags[z])
        sup = targets >= 0
        n_sup = int(sup.sum())
        if n_sup == 0:
            return None, None
        probs, _, cache = _forward(self.params, prep, self.config)
        idx = np.flatnonzero(sup)
        loss = -np.log(probs[idx, targets[idx]]).mean()
        dlogits = np.zeros_like(probs)
        dlogits[idx] = probs[idx]
        dlogits[idx, targets[idx]] -= 1.0
        dlogits /= n_sup
        grads = _backward(self.params, prep, self.config, cache, dlogits)
        return loss, grads

    def last_layer_token_gradients(self, table: Table, ref: CellRef,
                                   prep: Optional[TablePrep] = None) -> np.ndarray:
        """Per-token BADGE gradients (y_hat - onehot(argmax)) outer final rep."""
        prep = prep or self.prepare(table)
        token_idx = prep.token_slice(ref)
        if not token_idx:
            raise ValidationError(f"{ref}: empty cell has no token gradients")
        probs, reps, _ = _forward(self.params, prep, self.config)
        p = probs[token_idx]
        w = reps[token_idx]
        residual = p.copy()
        residual[np.arange(len(token_idx)), p.argmax(axis=1)] -= 1.0
        return (residual[:, :, None] * w[:, None, :]).reshape(len(token_idx), -1)

    # -- persistence ---------------------------------------------------

    def save(self, path) -> None:
        blob = {
            "config": asdict(self.config),
            "vocab": self.vocab.tokens[2:],  # PAD/UNK are implicit
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in self.params.items()},
        }
        with open(path, "w") as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path) -> "TaggerModel":
        with open(path) as fh:
            blob = json.load(fh)
        config = ModelConfig(**blob["config"])
        vocab = Vocabulary(blob["vocab"])
        params = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
                  for k, v in blob["params"].items()}
        return cls(config, vocab, params)


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 30
    patience: int = 3
    learning_rate: float = 1e-3
    clip_norm: float = 1.0
    rng_seed: int = 0


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


def _clip_global_norm(grads, max_norm):
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        f = max_norm / total
        for g in grads.values():
            g *= f
    return total


def fit(model: TaggerModel, tables: Sequence[Table], supervised: Mapping,
        val_tables: Sequence[Table], val_gold: Mapping,
        train_config: TrainConfig):
    """Adam training with early stopping on validation micro-F1.

    ``supervised`` maps CellRef -> TagSequence across all tables. With an
    empty validation set, early stopping is disabled and the final epoch's
    parameters are returned.
    """
    from .metrics import evaluate_micro_f1

    per_table = {}
    for ref, tags in supervised.items():
        per_table.setdefault(ref.table_id, {})[ref] = tags
    train = [(t, model.prepare(t), per_table[t.table_id])
             for t in tables if t.table_id in per_table]
    if not train:
        raise ValidationError("fit requires at least one supervised cell")
    val_preps = [(t, model.prepare(t)) for t in val_tables]

    rng = np.random.Generator(np.random.PCG64(train_config.rng_seed))
    m_state = {k: np.zeros_like(v) for k, v in model.params.items()}
    v_state = {k: np.zeros_like(v) for k, v in model.params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    best_f1 = -1.0
    best_params = None
    bad_epochs = 0
    history = []

    for epoch in range(train_config.max_epochs):
        order = rng.permutation(len(train))
        epoch_loss = 0.0
        n_updates = 0
        for i in order:
            table, prep, sup = train[i]
            loss, grads = model.loss_and_gradients(table, sup, prep=prep)
            if loss is None:
                continue
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            _clip_global_norm(grads, train_config.clip_norm)
            step += 1
            lr = train_config.learning_rate * (
                math.sqrt(1 - beta2 ** step) / (1 - beta1 ** step))
            for k, g in grads.items():
                m_state[k] = beta1 * m_state[k] + (1 - beta1) * g
                v_state[k] = beta2 * v_state[k] + (1 - beta2) * g * g
                model.params[k] -= lr * m_state[k] / (np.sqrt(v_state[k]) + eps)
            epoch_loss += loss
            n_updates += 1
        record = {"epoch": epoch, "loss": epoch_loss / max(n_updates, 1)}
        if val_preps:
            val_f1, _ = evaluate_micro_f1(model, [t for t, _ in val_preps], val_gold,
                                          preps=[p for _, p in val_preps])
            record["val_f1"] = val_f1
            if val_f1 > best_f1:
                best_f1 = val_f1
                best_params = {k: v.copy() for k, v in model.params.items()}
                bad_epochs = 0
            else:
                bad_epochs += 1
            history.append(record)
            if bad_epochs > train_config.patience:
                break
        else:
            history.append(record)

    if best_params is not None:
        model.params = best_params
    return model, history
