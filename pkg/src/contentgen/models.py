"""Hierarchical encoder-decoder models with an optional content-word stage.

Four architectures share one context encoder (a BiGRU over each context
sentence feeding a unidirectional dialog GRU):

* ``hed-noattn``: the sentence decoder starts from MLP(z_dial), no attention.
* ``hed``: as above, attending over every sentence-encoder state.
* ``hed-cd``: a content decoder first predicts the content sequence while
  attending over sentence-encoder states; the sentence decoder starts from
  MLP(z_dial ⊕ z_cont) and attends over the content decoder's states.
* ``hed-ced``: like ``hed-cd`` but z_cont and the sentence decoder's
  attention keys come from a BiGRU run over the content sequence.

Decoder output layers are tied to the word embedding table.
"""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import EOS_ID, MAX_SENT_LEN, PAD_ID, SOS_ID
from .neural import tensor as T
from .neural.layers import GRU, MLP, Attention, BiGRU
from .neural.params import ParamSet
from .neural.tensor import Tensor

# Spread of the random embedding fallback; comparable to typical pretrained
# word vectors (the other weights use the much narrower INIT_SCALE).
EMB_INIT_SCALE = 0.5

DA_LABELS = ("inform", "question", "directive", "commissive")


class Architecture(str, enum.Enum):
    HED_PLAIN = "hed-noattn"
    HED_ATTN = "hed"
    HED_CD = "hed-cd"
    HED_CED = "hed-ced"

    @property
    def has_content(self):
        return self in (Architecture.HED_CD, Architecture.HED_CED)


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    vocab_size: int
    architecture: Architecture = Architecture.HED_CED
    emb_size: int = 200
    enc_hidden: int = 300
    dec_hidden: int = 200
    layers: int = 1
    window: int = 5
    da_head: bool = False
    da_weight: float = 0.1
    emb_init_scale: float = EMB_INIT_SCALE
    max_sent_len: int = MAX_SENT_LEN
    max_content_len: int = 20

    def __post_init__(self):
        self.architecture = Architecture(self.architecture)
        for name in ("vocab_size", "emb_size", "enc_hidden", "dec_hidden", "window"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.layers != 1:
            raise ConfigError("only single-layer GRUs are supported")

    def to_dict(self):
        d = asdict(self)
        d["architecture"] = self.architecture.value
        return d

    @classmethod
    def from_dict(cls, d):
        kinds = {f: type(v) for f, v in asdict(cls(vocab_size=1)).items()}
        kinds["architecture"] = str
        out = {}
        for key, value in d.items():
            if key not in kinds:
                continue
            kind = kinds[key]
            if kind is bool and isinstance(value, str):
                value = value.lower() in ("1", "true", "yes")
            out[key] = kind(value)
        return cls(**out)


@dataclass
class Example:
    """Id-encoded (context, content, response) with an optional act label (0-3)."""

    context: list
    content: list
    response: list
    act: int | None = None


@dataclass
class Batch:
    size: int
    ctx_ids: np.ndarray
    ctx_mask: np.ndarray
    sent_index: np.ndarray
    sent_mask: np.ndarray
    key_index: np.ndarray
    key_mask: np.ndarray
    content_in: np.ndarray
    content_out: np.ndarray
    content_mask: np.ndarray
    content_ids: np.ndarray
    content_ids_mask: np.ndarray
    resp_in: np.ndarray
    resp_out: np.ndarray
    resp_mask: np.ndarray
    acts: np.ndarray | None = None


def _pad(rows, fill=PAD_ID, min_len=1):
    width = max([len(r) for r in rows] + [min_len])
    out = np.full((len(rows), width), fill, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=np.float64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
        mask[i, : len(r)] = 1.0
    return out, mask


def make_batch(examples, max_sent_len=MAX_SENT_LEN) -> Batch:
    """Pad a list of :class:`Example` into arrays; empty content becomes [EOS]."""
    sentences, sent_rows, key_rows = [], [], []
    for ex in examples:
        if not ex.context:
            raise ValueError("empty context window")
        if len(ex.response) > max_sent_len:
            raise ValueError(f"response longer than {max_sent_len} tokens")
        rows = []
        for s in ex.context:
            if not s:
                raise ValueError("empty context sentence")
            rows.append(len(sentences))
            sentences.append(s)
        sent_rows.append(rows)
    ctx_ids, ctx_mask = _pad(sentences)
    width = ctx_ids.shape[1]
    for rows in sent_rows:
        key_rows.append([r * width + t for r in rows for t in range(len(sentences[r]))])
    sent_index, sent_mask = _pad(sent_rows, fill=0)
    key_index, key_mask = _pad(key_rows, fill=0)

    content_in, content_mask = _pad([[SOS_ID] + list(ex.content) for ex in examples])
    content_out, _ = _pad([list(ex.content) + [EOS_ID] for ex in examples])
    content_ids, content_ids_mask = _pad([list(ex.content) or [EOS_ID] for ex in examples])
    resp_in, resp_mask = _pad([[SOS_ID] + list(ex.response) for ex in examples])
    resp_out, _ = _pad([list(ex.response) + [EOS_ID] for ex in examples])
    acts = None
    if all(ex.act is not None for ex in examples):
        acts = np.array([ex.act for ex in examples], dtype=np.int64)
    return Batch(
        len(examples), ctx_ids, ctx_mask, sent_index, sent_mask, key_index, key_mask,
        content_in, content_out, content_mask, content_ids, content_ids_mask,
        resp_in, resp_out, resp_mask, acts,
    )


@dataclass
class EncodedDialog:
    sent_states: Tensor  # (B, K, 2*enc_hidden): every token state of every context sentence
    key_mask: np.ndarray
    sent_finals: Tensor  # (B, M, 2*enc_hidden)
    dial_final: Tensor  # (B, enc_hidden)


@dataclass
class ForwardResult:
    loss: Tensor
    sentence_loss: Tensor
    content_loss: Tensor | None = None
    da_loss: Tensor | None = None
    sentence_positions: int = 0
    content_positions: int = 0
    logits: dict = field(default_factory=dict)


@dataclass
class DecoderRun:
    states: list
    final: Tensor
    outputs: list


class Decoder:
    """GRU decoder whose output layer is the transposed embedding table."""

    def __init__(self, params, prefix, config: ModelConfig, key_size=None, rng=None):
        self.gru = GRU(params, prefix, config.emb_size, config.dec_hidden, rng)
        self.attention = None
        if key_size is not None:
            self.attention = Attention(
                params, f"{prefix}.attn", config.dec_hidden, key_size, config.dec_hidden, rng
            )
        if rng is not None:
            params.uniform(f"{prefix}.out_bias", (config.vocab_size,), rng)
            if config.dec_hidden != config.emb_size:
                params.uniform(f"{prefix}.proj", (config.dec_hidden, config.emb_size), rng)
        self.bias = params[f"{prefix}.out_bias"]
        self.proj = params[f"{prefix}.proj"] if f"{prefix}.proj" in params else None
        self.embedding = params["embedding"]

    def step(self, token_ids, h, keys=None, key_proj=None, key_mask=None, mask=None, use_attention=True):
        x = T.take_rows(self.embedding, token_ids)
        h = self.gru.step(x, h, mask)
        out = h
        if self.attention is not None and use_attention:
            ctx, _ = self.attention(h, keys, key_proj, key_mask)
            out = h + ctx @ self.attention.out
        return h, out

    def run(self, h0, inputs, mask, keys=None, key_mask=None, use_attention=True):
        key_proj = None
        if self.attention is not None and use_attention:
            key_proj = self.attention.project_keys(keys)
        h, states, outputs = h0, [], []
        for t in range(inputs.shape[1]):
            h, out = self.step(inputs[:, t], h, keys, key_proj, key_mask, mask[:, t], use_attention)
            states.append(h)
            outputs.append(out)
        return DecoderRun(states, h, outputs)

    def logits(self, outputs):
        """Map (..., dec_hidden) decoder outputs to vocabulary logits."""
        if self.proj is not None:
            outputs = outputs @ self.proj
        return outputs @ T.transpose(self.embedding) + self.bias


class HierarchicalModel:
    def __init__(self, config: ModelConfig, seed=0, params: ParamSet | None = None):
        self.config = config
        c = config
        rng = None
        if params is None:
            params = ParamSet()
            rng = np.random.default_rng(seed)
            params.uniform("embedding", (c.vocab_size, c.emb_size), rng, scale=c.emb_init_scale)
        self.params = params
        arch = c.architecture
        self.sent_enc = BiGRU(params, "sent_enc", c.emb_size, c.enc_hidden, rng)
        self.dial_enc = GRU(params, "dial_enc", 2 * c.enc_hidden, c.enc_hidden, rng)

        if arch is Architecture.HED_PLAIN:
            sent_keys, bridge_in = None, c.enc_hidden
        elif arch is Architecture.HED_ATTN:
            sent_keys, bridge_in = 2 * c.enc_hidden, c.enc_hidden
        elif arch is Architecture.HED_CD:
            sent_keys, bridge_in = c.dec_hidden, c.enc_hidden + c.dec_hidden
        else:
            sent_keys, bridge_in = 2 * c.enc_hidden, 3 * c.enc_hidden
        self.bridge_in = bridge_in

        if arch.has_content:
            self.cont_bridge = MLP(params, "cont_bridge", c.enc_hidden, c.dec_hidden, c.dec_hidden, rng)
            self.cont_dec = Decoder(params, "cont_dec", c, 2 * c.enc_hidden, rng)
        if arch is Architecture.HED_CED:
            self.cont_enc = BiGRU(params, "cont_enc", c.emb_size, c.enc_hidden, rng)
        self.sent_bridge = MLP(params, "sent_bridge", bridge_in, c.dec_hidden, c.dec_hidden, rng)
        self.sent_dec = Decoder(params, "sent_dec", c, sent_keys, rng)
        if c.da_head:
            self.da_head = MLP(params, "da_head", c.dec_hidden, c.dec_hidden, len(DA_LABELS), rng, final_tanh=False)

    # encoding ---------------------------------------------------------------

    def encode_context(self, batch: Batch) -> EncodedDialog:
        emb = T.take_rows(self.params["embedding"], batch.ctx_ids)
        states, finals = self.sent_enc.run(emb, batch.ctx_mask)
        S, W = batch.ctx_ids.shape
        flat = T.reshape(states, (S * W, states.shape[-1]))
        keys = T.take_rows(flat, batch.key_index)
        per_dialog = T.take_rows(finals, batch.sent_index)
        _, dial = self.dial_enc.run(per_dialog, mask=batch.sent_mask)
        return EncodedDialog(keys, batch.key_mask, per_dialog, dial)

    def encode_content(self, content_ids, mask):
        emb = T.take_rows(self.params["embedding"], content_ids)
        return self.cont_enc.run(emb, mask)

    # training objectives -----------------------------------------------------

    def _decoder_loss(self, decoder: Decoder, run: DecoderRun, targets, mask):
        out = T.stack(run.outputs, axis=1)
        B, L, H = out.shape
        logits = decoder.logits(T.reshape(out, (B * L, H)))
        loss = T.cross_entropy(logits, targets.reshape(-1), mask.reshape(-1))
        return loss, logits

    def _da_loss(self, h0, batch):
        if batch.acts is None:
            raise ConfigError("dialog-act head enabled but the batch has no act labels")
        logits = self.da_head(h0)
        return T.cross_entropy(logits, batch.acts), logits

    def _finish(self, batch, h0, sent_run, content=None):
        sent_loss, sent_logits = self._decoder_loss(self.sent_dec, sent_run, batch.resp_out, batch.resp_mask)
        result = ForwardResult(
            loss=sent_loss,
            sentence_loss=sent_loss,
            sentence_positions=int(batch.resp_mask.sum()),
            logits={"sentence": sent_logits},
        )
        if content is not None:
            cont_loss, cont_logits = content
            result.content_loss = cont_loss
            result.content_positions = int(batch.content_mask.sum())
            result.logits["content"] = cont_logits
            result.loss = result.loss + cont_loss
        if self.config.da_head:
            da_loss, da_logits = self._da_loss(h0, batch)
            result.da_loss = da_loss
            result.logits["da"] = da_logits
            result.loss = result.loss + self.config.da_weight * da_loss
        return result

    def hed_forward(self, batch: Batch, attn=True) -> ForwardResult:
        enc = self.encode_context(batch)
        h0 = self.sent_bridge(enc.dial_final)
        use_attn = attn and self.sent_dec.attention is not None
        run = self.sent_dec.run(h0, batch.resp_in, batch.resp_mask, enc.sent_states, enc.key_mask, use_attn)
        return self._finish(batch, h0, run)

    def _content_decode(self, enc, batch):
        h0 = self.cont_bridge(enc.dial_final)
        run = self.cont_dec.run(h0, batch.content_in, batch.content_mask, enc.sent_states, enc.key_mask)
        return run, self._decoder_loss(self.cont_dec, run, batch.content_out, batch.content_mask)

    def hed_cd_forward(self, batch: Batch) -> ForwardResult:
        enc = self.encode_context(batch)
        cont_run, content = self._content_decode(enc, batch)
        keys = T.stack(cont_run.states, axis=1)
        h0 = self.sent_bridge(T.concat([enc.dial_final, cont_run.final], axis=-1))
        run = self.sent_dec.run(h0, batch.resp_in, batch.resp_mask, keys, batch.content_mask)
        return self._finish(batch, h0, run, content)

    def hed_ced_forward(self, batch: Batch) -> ForwardResult:
        enc = self.encode_context(batch)
        _, content = self._content_decode(enc, batch)
        keys, z_cont = self.encode_content(batch.content_ids, batch.content_ids_mask)
        h0 = self.sent_bridge(T.concat([enc.dial_final, z_cont], axis=-1))
        run = self.sent_dec.run(h0, batch.resp_in, batch.resp_mask, keys, batch.content_ids_mask)
        return self._finish(batch, h0, run, content)

    def forward(self, batch: Batch) -> ForwardResult:
        arch = self.config.architecture
        if arch is Architecture.HED_PLAIN:
            return self.hed_forward(batch, attn=False)
        if arch is Architecture.HED_ATTN:
            return self.hed_forward(batch, attn=True)
        if arch is Architecture.HED_CD:
            return self.hed_cd_forward(batch)
        return self.hed_ced_forward(batch)

    def load_embeddings(self, table, vocab):
        """Copy pretrained vectors into the embedding rows of known tokens.

        Returns the number of rows replaced; the rest keep their random init.
        """
        if table.dim != self.config.emb_size:
            raise ConfigError(f"embedding table has dimension {table.dim}, model expects {self.config.emb_size}")
        emb = self.params["embedding"].data
        hits = 0
        for i, tok in enumerate(vocab):
            if tok in table:
                emb[i] = table[tok]
                hits += 1
        return hits

    def predict_dialog_act(self, h0):
        """Probability over the four act labels from the sentence decoder's initial state."""
        if not self.config.da_head:
            raise ConfigError("model was built without a dialog-act head")
        logits = self.da_head(h0).data
        e = np.exp(logits - logits.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)
