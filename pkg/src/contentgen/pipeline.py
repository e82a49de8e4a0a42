"""Training triplets, epochs, two-step decoding and checkpoints."""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .corpus import EOS_ID, PAD_ID, SOS_ID, ContextWindow, Vocabulary
from .lexicon import ExtractionMode, FunctionLexicon, extract_content_sequence, inject_noise
from .models import Architecture, Example, HierarchicalModel, ModelConfig, make_batch
from .neural import tensor as T
from .neural.params import ParamSet, adam_update
from .neural.tensor import Tensor, no_grad

log = logging.getLogger(__name__)

TrainingTriplet = Example


def build_training_triplets(windows, lex: FunctionLexicon, vocab: Vocabulary) -> list[Example]:
    """One id-encoded triplet per window; content is the clean TRAINING-mode extraction."""
    triplets = []
    for w in windows:
        content = extract_content_sequence(w.response, lex, ExtractionMode.TRAINING).lemmas
        act = None if w.act is None else int(w.act) - 1
        triplets.append(
            Example(
                context=[vocab.encode(s) for s in w.context],
                content=vocab.encode(content),
                response=vocab.encode(w.response),
                act=act,
            )
        )
    return triplets


def write_triplets(triplets, path):
    """One triplet per line: context, content, response id lists separated by TAB.

    Context sentences are each terminated by the EOS id.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for t in triplets:
            ctx = " ".join(" ".join(map(str, s + [EOS_ID])) for s in t.context)
            f.write(f"{ctx}\t{' '.join(map(str, t.content))}\t{' '.join(map(str, t.response))}\n")


def read_triplets(path) -> list[Example]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3:
                raise ValueError(f"malformed triplet line: {line[:60]!r}")
            ctx, sent = [], []
            for tok in fields[0].split():
                if int(tok) == EOS_ID:
                    ctx.append(sent)
                    sent = []
                else:
                    sent.append(int(tok))
            out.append(Example(ctx, [int(x) for x in fields[1].split()], [int(x) for x in fields[2].split()]))
    return out


# training -------------------------------------------------------------------


class TrainingError(RuntimeError):
    pass


@dataclass
class EpochReport:
    epoch: int
    content_loss: float
    sentence_loss: float
    total_loss: float
    da_loss: float | None = None
    batches: int = 0

    def log_line(self):
        return f"{self.epoch}\t{self.content_loss:.6f}\t{self.sentence_loss:.6f}\t{self.total_loss:.6f}"


def train_epoch(model: HierarchicalModel, triplets, rng, batch_size=32, lr=0.0003,
                insert_pool=None, noise=True, epoch=0) -> EpochReport:
    """One pass: seeded shuffle, fresh noise per sample, one Adam step per batch."""
    if not triplets:
        raise TrainingError("no training triplets")
    use_noise = noise and model.config.architecture.has_content
    if use_noise and not insert_pool:
        raise TrainingError("noise injection needs a non-empty insert pool")
    order = rng.permutation(len(triplets))
    sums = {"content": 0.0, "sentence": 0.0, "total": 0.0, "da": 0.0}
    n_batches = 0
    for start in range(0, len(order), batch_size):
        examples = []
        for i in order[start : start + batch_size]:
            t = triplets[i]
            content = inject_noise(t.content, rng, insert_pool) if use_noise else list(t.content)
            examples.append(Example(t.context, content, t.response, t.act))
        batch = make_batch(examples, model.config.max_sent_len)
        result = model.forward(batch)
        total = result.loss.item()
        if not math.isfinite(total):
            raise TrainingError(f"non-finite loss {total} in epoch {epoch}, batch {n_batches}")
        result.loss.backward()
        adam_update(model.params, lr=lr)
        n = len(examples)
        sums["total"] += total * n
        sums["sentence"] += result.sentence_loss.item() * n
        if result.content_loss is not None:
            sums["content"] += result.content_loss.item() * n
        if result.da_loss is not None:
            sums["da"] += result.da_loss.item() * n
        n_batches += 1
    count = len(order)
    return EpochReport(
        epoch=epoch,
        content_loss=sums["content"] / count,
        sentence_loss=sums["sentence"] / count,
        total_loss=sums["total"] / count,
        da_loss=sums["da"] / count if model.config.da_head else None,
        batches=n_batches,
    )


def evaluate_nll(model: HierarchicalModel, triplets, batch_size=64):
    """Summed NLL and position counts over clean triplets: (content, sentence)."""
    sums = np.zeros(2)
    counts = np.zeros(2)
    with no_grad():
        for start in range(0, len(triplets), batch_size):
            batch = make_batch(triplets[start : start + batch_size], model.config.max_sent_len)
            result = model.forward(batch)
            counts[1] += result.sentence_positions
            sums[1] += result.sentence_loss.item() * result.sentence_positions
            if result.content_loss is not None:
                counts[0] += result.content_positions
                sums[0] += result.content_loss.item() * result.content_positions
    return sums, counts


def perplexity(model, triplets):
    """Per-token perplexity over every decoded position (content and sentence)."""
    sums, counts = evaluate_nll(model, triplets)
    return math.exp(sums.sum() / counts.sum())


# decoding -----------------------------------------------------------------------

_BANNED = (PAD_ID, SOS_ID)


def _step_logits(decoder, token, h, keys, key_proj, key_mask):
    h, out = decoder.step(np.array([token]), h, keys, key_proj, key_mask, use_attention=keys is not None)
    logits = decoder.logits(out).data[0].astype(np.float64)
    logits[list(_BANNED)] = -np.inf
    return h, logits


def _prepare_keys(decoder, keys, key_mask):
    if decoder.attention is None or keys is None:
        return None, None, None
    return keys, decoder.attention.project_keys(keys), key_mask


def decode_greedy(decoder, initial: Tensor, keys=None, key_mask=None, max_len=40):
    """Argmax decoding from SOS until EOS or ``max_len`` tokens.

    Returns the emitted tokens (without EOS), the decoder states of every step
    taken and the logits of the first step. Ties go to the lowest id.
    """
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    keys, key_proj, key_mask = _prepare_keys(decoder, keys, key_mask)
    h, token, tokens, states, first = initial, SOS_ID, [], [], None
    with no_grad():
        for _ in range(max_len):
            h, logits = _step_logits(decoder, token, h, keys, key_proj, key_mask)
            states.append(h)
            if first is None:
                first = logits
            token = int(np.argmax(logits))
            if token == EOS_ID:
                break
            tokens.append(token)
    return tokens, states, first


def decode_beam(decoder, initial: Tensor, keys=None, key_mask=None, max_len=40, width=4):
    """Beam search ranked by length-normalized log-probability."""
    keys, key_proj, key_mask = _prepare_keys(decoder, keys, key_mask)
    beams = [(0.0, [], [], initial, SOS_ID)]  # (logp, tokens, states, h, last)
    finished = []
    first = None
    with no_grad():
        for _ in range(max_len):
            candidates = []
            for logp, tokens, states, h, last in beams:
                h2, logits = _step_logits(decoder, last, h, keys, key_proj, key_mask)
                if first is None:
                    first = logits
                lp = logits - np.logaddexp.reduce(logits[np.isfinite(logits)])
                for tok in np.argsort(-lp, kind="stable")[:width]:
                    candidates.append((logp + lp[tok], tokens, states + [h2], h2, int(tok)))
            candidates.sort(key=lambda c: -c[0])
            beams = []
            for logp, tokens, states, h, tok in candidates[:width]:
                if tok == EOS_ID:
                    finished.append((logp / (len(tokens) + 1), tokens, states))
                else:
                    beams.append((logp, tokens + [tok], states, h, tok))
            if not beams:
                break
        for logp, tokens, states, h, tok in beams:
            finished.append((logp / max(len(tokens), 1), tokens, states))
    best = max(finished, key=lambda f: f[0])
    return best[1], best[2], first


@dataclass
class Generation:
    content: list
    response: list
    act: int | None = None
    first_logits: np.ndarray | None = None


def _decode(decoder, h0, keys, key_mask, max_len, beam):
    if beam and beam > 1:
        return decode_beam(decoder, h0, keys, key_mask, max_len, beam)
    return decode_greedy(decoder, h0, keys, key_mask, max_len)


def generate(model: HierarchicalModel, context, beam=0, content_override=None) -> Generation:
    """Two-step generation for one id-encoded context (a list of sentences).

    For the content architectures the content sequence is decoded first and
    the response is decoded conditioned on it; ``content_override`` replaces
    the decoded content (useful for probing the second step).
    """
    c = model.config
    batch = make_batch([Example(context, [], [1])], c.max_sent_len)
    arch = c.architecture
    content = []
    with no_grad():
        enc = model.encode_context(batch)
        if arch is Architecture.HED_PLAIN or arch is Architecture.HED_ATTN:
            h0 = model.sent_bridge(enc.dial_final)
            keys = enc.sent_states if arch is Architecture.HED_ATTN else None
            key_mask = enc.key_mask
        else:
            h0c = model.cont_bridge(enc.dial_final)
            content, states, _ = _decode(
                model.cont_dec, h0c, enc.sent_states, enc.key_mask, c.max_content_len, beam
            )
            if content_override is not None:
                content = list(content_override)
                run = model.cont_dec.run(
                    h0c,
                    np.array([[SOS_ID] + content]),
                    np.ones((1, len(content) + 1)),
                    enc.sent_states,
                    enc.key_mask,
                )
                states = run.states
            if arch is Architecture.HED_CD:
                keys = T.stack(states, axis=1)
                key_mask = np.ones((1, len(states)))
                z_cont = states[-1]
            else:
                ids = np.array([content or [EOS_ID]])
                keys, z_cont = model.encode_content(ids, np.ones(ids.shape))
                key_mask = np.ones(ids.shape)
            h0 = model.sent_bridge(T.concat([enc.dial_final, z_cont], axis=-1))
        response, _, first = _decode(model.sent_dec, h0, keys, key_mask, c.max_sent_len, beam)
        act = None
        if c.da_head:
            act = int(np.argmax(model.predict_dialog_act(h0)[0]))
    return Generation(content, response, act, first)


def contexts_from_dialog(dialog, vocab: Vocabulary, window=5):
    """Id-encoded context windows (and references) for every response position."""
    out = []
    for i in range(1, len(dialog.sentences)):
        ctx = [vocab.encode(s) for s in dialog.sentences[max(0, i - window) : i]]
        out.append((ctx, dialog.sentences[i]))
    return out


# checkpoints -------------------------------------------------------------------

MAGIC = "contentgen-params 1"


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(model: HierarchicalModel, path, vocab: Vocabulary | None = None, epoch=0, metrics=None):
    """Write ``manifest.txt`` and ``params.bin`` into directory ``path``.

    ``params.bin`` is a text header (name, shape, byte offset per tensor)
    terminated by an ``END`` line, followed by little-endian float32 data.
    """
    os.makedirs(path, exist_ok=True)
    manifest = {f"config.{k}": v for k, v in model.config.to_dict().items()}
    manifest["vocab_hash"] = vocab.hash() if vocab is not None else ""
    manifest["epoch"] = epoch
    for k, v in sorted((metrics or {}).items()):
        manifest[f"metric.{k}"] = v
    with open(os.path.join(path, "manifest.txt"), "w", encoding="utf-8", newline="\n") as f:
        for k, v in manifest.items():
            f.write(f"{k}: {v}\n")

    header, blobs, offset = [MAGIC], [], 0
    for name in model.params.names():
        arr = np.ascontiguousarray(model.params[name].data, dtype="<f4")
        shape = ",".join(str(d) for d in arr.shape)
        header.append(f"{name}\t{shape}\t{offset}")
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header.append("END")
    with open(os.path.join(path, "params.bin"), "wb") as f:
        f.write(("\n".join(header) + "\n").encode("utf-8"))
        for b in blobs:
            f.write(b)


def read_manifest(path):
    manifest = {}
    with open(os.path.join(path, "manifest.txt"), encoding="utf-8") as f:
        for line in f:
            key, sep, value = line.rstrip("\n").partition(": ")
            if sep:
                manifest[key] = value
    return manifest


def read_params(path):
    with open(os.path.join(path, "params.bin"), "rb") as f:
        raw = f.read()
    end = raw.find(b"\nEND\n")
    if not raw.startswith(MAGIC.encode()) or end < 0:
        raise CheckpointError("corrupt header in params.bin")
    lines = raw[:end].decode("utf-8").split("\n")[1:]
    data = raw[end + len(b"\nEND\n") :]
    arrays = {}
    for line in lines:
        try:
            name, shape, offset = line.split("\t")
            shape = tuple(int(d) for d in shape.split(",")) if shape else ()
            offset = int(offset)
        except ValueError:
            raise CheckpointError(f"corrupt header line {line!r}") from None
        size = int(np.prod(shape)) * 4
        if offset + size > len(data):
            raise CheckpointError(f"params.bin truncated: parameter {name!r} is missing data")
        arrays[name] = np.frombuffer(data, dtype="<f4", count=size // 4, offset=offset).reshape(shape).astype(np.float32)
    return arrays


def load_checkpoint(path, vocab: Vocabulary | None = None) -> tuple[HierarchicalModel, dict]:
    """Rebuild the model stored at ``path``; refuses a mismatched vocabulary."""
    manifest = read_manifest(path)
    if vocab is not None:
        expected = manifest.get("vocab_hash", "")
        actual = vocab.hash()
        if expected != actual:
            raise CheckpointError(f"vocabulary hash mismatch: checkpoint {expected[:12]} vs given {actual[:12]}")
    config = ModelConfig.from_dict({k[7:]: v for k, v in manifest.items() if k.startswith("config.")})
    template = HierarchicalModel(config, seed=0)
    arrays = read_params(path)
    expected = set(template.params.names())
    missing = expected - set(arrays)
    if missing:
        raise CheckpointError(f"checkpoint lacks parameter {sorted(missing)[0]!r}")
    params = ParamSet()
    for name in template.params.names():
        want = template.params[name].shape
        if arrays[name].shape != want:
            raise CheckpointError(f"shape mismatch for {name!r}: {arrays[name].shape} vs {want}")
        params.add(name, arrays[name])
    return HierarchicalModel(config, params=params), manifest


def build_content_vocab(dialogs, cap, lex: FunctionLexicon) -> Vocabulary:
    """Like :func:`corpus.build_vocab`, but lemmas of content words are counted too.

    Content sequences are made of lemmas ("went" becomes "go"), so a lemma
    that never occurs verbatim would otherwise be encoded as UNK.
    """
    from collections import Counter

    from .corpus import SPECIALS, count_tokens

    if cap < 1:
        raise ValueError("vocabulary cap must be at least 1")
    counts = count_tokens(dialogs)
    lemmas = Counter()
    for d in dialogs:
        for s in d.sentences:
            lemmas.update(extract_content_sequence(s, lex, ExtractionMode.TRAINING).lemmas)
    for tok, n in lemmas.items():
        if tok not in counts:
            counts[tok] = n
    for s in SPECIALS:
        counts.pop(s, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary(t for t, _ in ranked[:cap])
