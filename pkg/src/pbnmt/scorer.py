"""Deterministic toy attention encoder-decoder used as the neural feature.

The decoder-side contract is a single forward step over row-aligned matrices::

    (H_next, P) = step(session, H, E)

Row ``j`` of ``P`` is the distribution of the word whose embedding is row
``j`` of ``E``, conditioned on the prefix summarized by row ``j`` of ``H``;
row ``j`` of ``H_next`` is the state after consuming that word.

All matrix products go through :func:`_mm` (``einsum``), whose per-element
accumulation order does not depend on the number of rows. Scoring a word in
a batch of one and in a batch of thousands therefore gives identical bits,
which keeps batched and sequential decoding exactly equivalent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

UNK_ID = 0
EOS_ID = 1
UNK_TOKEN = "<unk>"
EOS_TOKEN = "</s>"

MAGIC = "PBNMT-PARAMS 1"


class ModelError(ValueError):
    pass


def _mm(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jk->ik", x, w)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# vocabularies


class Vocab:
    """Token <-> id map; ids 0 and 1 are reserved for ``<unk>`` and ``</s>``."""

    def __init__(self, tokens: Iterable[str]):
        tokens = list(tokens)
        if tokens[:2] != [UNK_TOKEN, EOS_TOKEN]:
            tokens = [UNK_TOKEN, EOS_TOKEN] + [t for t in tokens if t not in (UNK_TOKEN, EOS_TOKEN)]
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise ModelError("duplicate token in vocabulary")

    def __len__(self):
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def ids(self, tokens: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.index.get(t, UNK_ID) for t in tokens)

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([line.strip() for line in lines if line.strip()])


# ---------------------------------------------------------------------------
# parameters


@dataclass
class ModelParams:
    arrays: dict[str, np.ndarray]

    def __post_init__(self):
        self.arrays = {k: np.asarray(v, dtype=np.float64) for k, v in self.arrays.items()}
        validate(self)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    @property
    def bidirectional(self) -> bool:
        return "enc_r_W" in self.arrays

    @property
    def emb_size(self) -> int:
        return self.arrays["src_emb"].shape[1]

    @property
    def hidden_size(self) -> int:
        return self.arrays["enc_U"].shape[0]

    @property
    def src_vocab_size(self) -> int:
        return self.arrays["src_emb"].shape[0]

    @property
    def tgt_vocab_size(self) -> int:
        return self.arrays["tgt_emb"].shape[0]

    def names(self) -> list[str]:
        return list(self.arrays)


def expected_shapes(src_vocab: int, tgt_vocab: int, emb: int, hidden: int, att: int,
                    bidirectional: bool) -> dict[str, tuple[int, int]]:
    ctx = 2 * hidden if bidirectional else hidden
    shapes = {
        "src_emb": (src_vocab, emb),
        "tgt_emb": (tgt_vocab, emb),
        "enc_W": (emb, 3 * hidden),
        "enc_U": (hidden, 3 * hidden),
        "enc_b": (1, 3 * hidden),
    }
    if bidirectional:
        shapes.update({
            "enc_r_W": (emb, 3 * hidden),
            "enc_r_U": (hidden, 3 * hidden),
            "enc_r_b": (1, 3 * hidden),
        })
    shapes.update({
        "init_W": (ctx, hidden),
        "init_b": (1, hidden),
        "W_att": (hidden, att),
        "U_att": (ctx, att),
        "b_att": (1, att),
        "v_att": (att, 1),
        "dec_W": (emb + ctx, 3 * hidden),
        "dec_U": (hidden, 3 * hidden),
        "dec_b": (1, 3 * hidden),
        "out_W": (hidden + ctx, tgt_vocab),
        "out_b": (1, tgt_vocab),
    })
    return shapes


def validate(params: ModelParams) -> None:
    a = params.arrays
    for name in ("src_emb", "tgt_emb", "enc_U", "W_att"):
        if name not in a:
            raise ModelError(f"missing parameter {name}")
    for name, arr in a.items():
        if arr.ndim != 2:
            raise ModelError(f"parameter {name} must be 2-D, got shape {arr.shape}")
    shapes = expected_shapes(
        a["src_emb"].shape[0], a["tgt_emb"].shape[0], a["src_emb"].shape[1],
        a["enc_U"].shape[0], a["W_att"].shape[1], "enc_r_W" in a,
    )
    for name, shape in shapes.items():
        if name not in a:
            raise ModelError(f"missing parameter {name}")
        if a[name].shape != shape:
            raise ModelError(f"shape mismatch for {name}: expected {shape}, got {a[name].shape}")
    extra = set(a) - set(shapes)
    if extra:
        raise ModelError(f"unexpected parameter {sorted(extra)[0]}")
    for name, arr in a.items():
        if not np.all(np.isfinite(arr)):
            raise ModelError(f"non-finite entries in {name}")


def init_params(seed: int, src_vocab_size: int, tgt_vocab_size: int, emb_size: int = 16,
                hidden_size: int = 32, att_size: int | None = None, bidirectional: bool = True,
                scale: float = 0.3, out_scale: float | None = None) -> ModelParams:
    """Seeded uniform initializer. ``out_scale`` sharpens the output layer."""
    att_size = att_size or hidden_size
    rng = np.random.default_rng(seed)
    shapes = expected_shapes(src_vocab_size, tgt_vocab_size, emb_size, hidden_size, att_size,
                             bidirectional)
    arrays = {}
    for name, shape in shapes.items():
        s = out_scale if (name.startswith("out_") and out_scale is not None) else scale
        # store at float32 precision so a save/load roundtrip is lossless
        arrays[name] = rng.uniform(-s, s, size=shape).astype(np.float32).astype(np.float64)
    return ModelParams(arrays)


def save_model(params: ModelParams, path) -> None:
    """Text header naming each array and its shape, then little-endian float32 data."""
    lines = [MAGIC, str(len(params.arrays))]
    for name, arr in params.arrays.items():
        lines.append(f"{name} {arr.shape[0]} {arr.shape[1]}")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    with open(path, "wb") as f:
        f.write(header)
        for arr in params.arrays.values():
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path) -> ModelParams:
    data = Path(path).read_bytes()
    pos = 0

    def readline() -> str:
        nonlocal pos
        end = data.index(b"\n", pos)
        line = data[pos:end].decode("utf-8")
        pos = end + 1
        return line

    try:
        if readline() != MAGIC:
            raise ModelError(f"{path}: not a parameter file")
        count = int(readline())
        entries = []
        for _ in range(count):
            name, rows, cols = readline().split()
            entries.append((name, int(rows), int(cols)))
    except (ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"{path}: malformed header") from None
    arrays = {}
    for name, rows, cols in entries:
        nbytes = 4 * rows * cols
        if pos + nbytes > len(data):
            raise ModelError(f"{path}: truncated payload for {name}")
        arr = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=pos)
        arrays[name] = arr.reshape(rows, cols).astype(np.float64)
        pos += nbytes
    if pos != len(data):
        raise ModelError(f"{path}: trailing bytes after payload")
    return ModelParams(arrays)


# ---------------------------------------------------------------------------
# inference


def _gru(x, h, W, U, b):
    hidden = h.shape[1]
    gx = _mm(x, W) + b
    gh = _mm(h, U[:, : 2 * hidden])
    z = _sigmoid(gx[:, :hidden] + gh[:, :hidden])
    r = _sigmoid(gx[:, hidden : 2 * hidden] + gh[:, hidden:])
    cand = np.tanh(gx[:, 2 * hidden :] + _mm(r * h, U[:, 2 * hidden :]))
    return (1.0 - z) * h + z * cand


@dataclass(frozen=True, eq=False)
class ScorerSession:
    """Source-side context for one sentence; immutable once built."""

    params: ModelParams
    annotations: np.ndarray  # (source length, C)
    att_keys: np.ndarray  # annotations projected for attention, (source length, A)
    h0: np.ndarray  # initial decoder state, (H,)
    source_ids: tuple[int, ...] = field(default=())

    def __len__(self):
        return self.annotations.shape[0]


def encode(params: ModelParams, source_ids: Sequence[int]) -> np.ndarray:
    ids = np.asarray([i if 0 <= i < params.src_vocab_size else UNK_ID for i in source_ids])
    x = params["src_emb"][ids]
    hidden = params.hidden_size

    def run(direction: str, order):
        h = np.zeros((1, hidden))
        out = [None] * len(ids)
        for t in order:
            h = _gru(x[t : t + 1], h, params[f"{direction}W"], params[f"{direction}U"],
                     params[f"{direction}b"])
            out[t] = h[0]
        return np.stack(out)

    fwd = run("enc_", range(len(ids)))
    if not params.bidirectional:
        return fwd
    bwd = run("enc_r_", reversed(range(len(ids))))
    return np.concatenate([fwd, bwd], axis=1)


def init_session(params: ModelParams, source_ids: Sequence[int]) -> ScorerSession:
    if len(source_ids) == 0:
        raise ModelError("cannot initialize a scorer session with an empty source")
    annotations = encode(params, source_ids)
    mean = annotations.mean(axis=0, keepdims=True)
    h0 = np.tanh(_mm(mean, params["init_W"]) + params["init_b"])[0]
    keys = _mm(annotations, params["U_att"])
    for arr in (annotations, keys, h0):
        arr.setflags(write=False)
    return ScorerSession(params, annotations, keys, h0, tuple(source_ids))


def attention(session: ScorerSession, H: np.ndarray) -> np.ndarray:
    """Attention weights over source positions, one row per state row."""
    p = session.params
    q = _mm(H, p["W_att"]) + p["b_att"]
    e = np.tanh(q[:, None, :] + session.att_keys[None, :, :])
    logits = np.einsum("nsa,a->ns", e, p["v_att"][:, 0])
    return _softmax(logits)


def step(session: ScorerSession, H: np.ndarray, E: np.ndarray, return_attention: bool = False):
    """One batched forward step: ``(H, E) -> (H_next, P)``."""
    H = np.asarray(H, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    if H.ndim != 2 or E.ndim != 2 or H.shape[0] != E.shape[0] or H.shape[0] == 0:
        raise ModelError(f"state and embedding rows must match and be non-zero, got {H.shape} vs {E.shape}")
    p = session.params
    if H.shape[1] != p.hidden_size or E.shape[1] != p.emb_size:
        raise ModelError("state or embedding width does not match the model")
    alpha = attention(session, H)
    ctx = np.einsum("ns,sc->nc", alpha, session.annotations)
    P = _softmax(_mm(np.concatenate([H, ctx], axis=1), p["out_W"]) + p["out_b"])
    H_next = _gru(np.concatenate([E, ctx], axis=1), H, p["dec_W"], p["dec_U"], p["dec_b"])
    if return_attention:
        return H_next, P, alpha
    return H_next, P


def embed(params: ModelParams, word_ids: Sequence[int]) -> np.ndarray:
    ids = np.asarray(word_ids, dtype=np.int64)
    ids = np.where((ids >= 0) & (ids < params.tgt_vocab_size), ids, UNK_ID)
    return params["tgt_emb"][ids]


def score_sequence(session: ScorerSession, words: Sequence[int], state: np.ndarray | None = None):
    """Sequential oracle: chain batch-of-one steps, summing ln P of each word.

    Returns ``(log-prob sum, final state)``; ``state`` defaults to ``h0``.
    """
    if len(words) == 0:
        raise ModelError("score_sequence needs at least one word")
    h = (session.h0 if state is None else np.asarray(state))[None, :]
    emb = embed(session.params, words)
    vocab = session.params.tgt_vocab_size
    total = 0.0
    for i, w in enumerate(words):
        h, P = step(session, h, emb[i : i + 1])
        total += math.log(float(P[0, w if 0 <= w < vocab else UNK_ID]))
    return total, h[0]


@dataclass
class NeuralScorer:
    """A parameter set together with the vocabularies it was built for."""

    params: ModelParams
    source_vocab: Vocab
    target_vocab: Vocab

    def __post_init__(self):
        if len(self.source_vocab) > self.params.src_vocab_size:
            raise ModelError("source vocabulary larger than the model's embedding table")
        if len(self.target_vocab) > self.params.tgt_vocab_size:
            raise ModelError("target vocabulary larger than the model's output layer")

    def session(self, source_tokens: Sequence[str]) -> ScorerSession:
        return init_session(self.params, self.source_vocab.ids(source_tokens))
