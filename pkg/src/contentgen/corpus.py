"""Dialog corpus ingestion, tokenization, vocabularies and context windows."""
from __future__ import annotations

import ast
import hashlib
import logging
import random
import re
from collections import Counter
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

PAD, UNK, SOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
SPECIALS = (PAD, UNK, SOS, EOS)
PAD_ID, UNK_ID, SOS_ID, EOS_ID = range(4)

MAX_SENT_LEN = 40
DEFAULT_WINDOW = 5
TERMINALS = {".", "!", "?"}
EOU = "__eou__"
CORNELL_SEP = " +++$+++ "


@dataclass
class Dialog:
    """A conversation.

    Straight out of a parser only ``turns`` (raw text) is filled; after
    :func:`preprocess_dialog` the tokenized ``sentences`` are set and
    ``turn_boundaries`` index the first sentence of every turn but the first.
    ``acts`` holds optional dialog-act labels, per turn before preprocessing
    and per sentence after.
    """

    sentences: list[list[str]] = field(default_factory=list)
    turn_boundaries: list[int] = field(default_factory=list)
    turns: list[str] = field(default_factory=list)
    acts: list[int] | None = None


@dataclass
class ContextWindow:
    context: list[list[str]]
    response: list[str]
    act: int | None = None


_TOKEN_RE = re.compile(
    r"\.\.\."
    r"|[a-z0-9]+(?=n't\b)"
    r"|n't\b"
    r"|'(?:s|re|ve|ll|d|m)\b"
    r"|[a-z0-9]+(?:(?:[-.]|'(?!(?:s|re|ve|ll|d|m|t)\b))[a-z0-9]+)*"
    r"|[^\sa-z0-9]"
)
_QUOTES = str.maketrans({"’": "'", "‘": "'", "“": '"', "”": '"', "…": "..."})


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word, clitic and punctuation tokens.

    >>> tokenize("I can't go, it's late...")
    ['i', 'ca', "n't", 'go', ',', 'it', "'s", 'late', '...']
    """
    return _TOKEN_RE.findall(text.translate(_QUOTES).lower())


def segment(tokens: list[str]) -> list[list[str]]:
    """Split a token list after each run of terminal punctuation."""
    sentences, current = [], []
    for i, tok in enumerate(tokens):
        current.append(tok)
        nxt = tokens[i + 1] if i + 1 < len(tokens) else None
        if tok in TERMINALS and nxt not in TERMINALS:
            sentences.append(current)
            current = []
    if current:
        sentences.append(current)
    return sentences


def parse_dailydialog(raw_line: str, act_line: str | None = None) -> Dialog | None:
    """Parse one DailyDialog line; returns None (and warns) when no turn survives."""
    turns = [t.strip() for t in raw_line.strip().split(EOU)]
    acts = None
    if act_line is not None:
        labels = [int(a) for a in act_line.split()]
    kept, kept_acts = [], []
    for i, t in enumerate(turns):
        if not t:
            continue
        kept.append(t)
        if act_line is not None and i < len(labels):
            kept_acts.append(labels[i])
    if not kept:
        log.warning("skipping DailyDialog line with no non-empty turns: %r", raw_line[:60])
        return None
    if act_line is not None:
        if len(kept_acts) != len(kept):
            log.warning("dialog-act line does not align with turns; dropping labels")
        else:
            acts = kept_acts
    return Dialog(turns=kept, turn_boundaries=list(range(1, len(kept))), acts=acts)


def parse_cornell_line(line: str):
    """Return (line id, text) for a movie_lines record, or None if malformed."""
    fields = line.rstrip("\n").split(CORNELL_SEP)
    if len(fields) != 5:
        return None
    return fields[0].strip(), fields[4]


def parse_cornell_movie(lines_file, conversations_file) -> list[Dialog]:
    """Assemble Cornell Movie-Dialogs conversations from the two raw streams."""
    utterances = {}
    for n, line in enumerate(lines_file, 1):
        if not line.strip():
            continue
        rec = parse_cornell_line(line)
        if rec is None:
            log.warning("movie_lines record %d has the wrong field count; skipped", n)
            continue
        utterances[rec[0]] = rec[1]

    dialogs = []
    for n, line in enumerate(conversations_file, 1):
        if not line.strip():
            continue
        fields = line.rstrip("\n").split(CORNELL_SEP)
        if len(fields) != 4:
            log.warning("conversation record %d has the wrong field count; skipped", n)
            continue
        try:
            ids = ast.literal_eval(fields[3].strip())
        except (ValueError, SyntaxError):
            log.warning("conversation record %d has an unreadable id list; skipped", n)
            continue
        turns = []
        for uid in ids:
            text = utterances.get(uid)
            if text is None:
                log.warning("conversation %d references unknown line id %s; dropped", n, uid)
                continue
            if text.strip():
                turns.append(text.strip())
        if not turns:
            continue
        dialogs.append(Dialog(turns=turns, turn_boundaries=list(range(1, len(turns)))))
    return dialogs


def preprocess_dialog(d: Dialog, max_len: int = MAX_SENT_LEN) -> Dialog:
    """Tokenize, segment and truncate every turn of ``d``."""
    sentences, boundaries, acts = [], [], []
    for i, turn in enumerate(d.turns):
        pieces = [s[:max_len] for s in segment(tokenize(turn)) if s]
        if not pieces:
            continue
        if sentences:
            boundaries.append(len(sentences))
        sentences.extend(pieces)
        if d.acts is not None:
            acts.extend([d.acts[i]] * len(pieces))
    return Dialog(
        sentences=sentences,
        turn_boundaries=boundaries,
        turns=list(d.turns),
        acts=acts if d.acts is not None else None,
    )


class Vocabulary:
    """Token/id bijection with the four specials at ids 0-3."""

    def __init__(self, tokens=()):
        self.itos = list(SPECIALS)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            if t in self.stoi:
                raise ValueError(f"duplicate vocabulary entry {t!r}")
            self.stoi[t] = len(self.itos)
            self.itos.append(t)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __iter__(self):
        return iter(self.itos)

    def words(self):
        """Non-special entries in id order."""
        return self.itos[len(SPECIALS):]

    def token_to_id(self, token):
        return self.stoi.get(token, UNK_ID)

    def id_to_token(self, idx):
        return self.itos[idx]

    def encode(self, tokens):
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids):
        return [self.itos[i] for i in ids]

    def hash(self):
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for t in self.words():
                f.write(t + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls(line.rstrip("\n") for line in f if line.rstrip("\n"))


def count_tokens(dialogs) -> Counter:
    counts = Counter()
    for d in dialogs:
        for s in d.sentences:
            counts.update(s)
    return counts


def build_vocab(dialogs, cap: int) -> Vocabulary:
    """Keep the ``cap`` most frequent tokens; ties are broken lexicographically."""
    if cap < 1:
        raise ValueError("vocabulary cap must be at least 1")
    counts = count_tokens(dialogs)
    for s in SPECIALS:
        counts.pop(s, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary(t for t, _ in ranked[:cap])


def to_context_windows(d: Dialog, window: int = DEFAULT_WINDOW) -> list[ContextWindow]:
    out = []
    for i in range(1, len(d.sentences)):
        act = d.acts[i] if d.acts is not None else None
        out.append(ContextWindow(d.sentences[max(0, i - window) : i], d.sentences[i], act))
    return out


def split_dialogs(dialogs, seed: int, ratios=(0.8, 0.1, 0.1)):
    """Seeded dialog-level shuffle into train/valid/test, plus the index lists."""
    order = list(range(len(dialogs)))
    random.Random(seed).shuffle(order)
    n_train = int(round(ratios[0] * len(order)))
    n_valid = int(round(ratios[1] * len(order)))
    parts = (order[:n_train], order[n_train : n_train + n_valid], order[n_train + n_valid :])
    return tuple([dialogs[i] for i in idx] for idx in parts), parts


# Canonical preprocessed format: one dialog per line, sentences joined by TAB,
# tokens joined by single spaces.

def format_dialog(d: Dialog) -> str:
    return "\t".join(" ".join(s) for s in d.sentences)


def parse_canonical_line(line: str) -> Dialog:
    sentences = [s.split(" ") for s in line.rstrip("\n").split("\t") if s]
    return Dialog(sentences=sentences)


def write_canonical(dialogs, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for d in dialogs:
            f.write(format_dialog(d) + "\n")


def read_canonical(path) -> list[Dialog]:
    with open(path, encoding="utf-8") as f:
        return [parse_canonical_line(line) for line in f if line.strip()]


def write_acts(dialogs, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for d in dialogs:
            f.write(" ".join(str(a) for a in (d.acts or [])) + "\n")


def attach_acts(dialogs, path):
    with open(path, encoding="utf-8") as f:
        for d, line in zip(dialogs, f):
            labels = [int(a) for a in line.split()]
            d.acts = labels if len(labels) == len(d.sentences) else None
    return dialogs
