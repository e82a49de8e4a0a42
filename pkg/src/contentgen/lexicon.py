"""Function-word lexicon, rule lemmatizer and content-word sequences."""
from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from importlib import resources

log = logging.getLogger(__name__)

CATEGORIES = (
    "article",
    "pronoun",
    "preposition",
    "conjunction",
    "auxiliary",
    "interjection",
    "particle",
    "punctuation",
)

# Clitic and split-negation forms produced by the tokenizer, looked up under
# the word they stand for ("'ll" is an auxiliary because "will" is).
CLITIC_FORMS = {
    "'m": "am",
    "'re": "are",
    "'ve": "have",
    "'ll": "will",
    "'d": "would",
    "ca": "can",
    "wo": "will",
    "sha": "shall",
}


class ExtractionMode(enum.Enum):
    TRAINING = "train"
    EVALUATION = "eval"

    @property
    def active_categories(self):
        if self is ExtractionMode.TRAINING:
            return frozenset(CATEGORIES) - {"pronoun", "punctuation"}
        return frozenset(CATEGORIES)


@dataclass(frozen=True)
class FunctionLexicon:
    entries: dict = field(default_factory=dict)

    def categories(self, word):
        word = word.lower()
        cats = self.entries.get(word, frozenset())
        alias = CLITIC_FORMS.get(word)
        if alias is not None:
            cats = cats | self.entries.get(alias, frozenset())
        return cats

    def is_function_word(self, word, mode: ExtractionMode):
        return not self.categories(word).isdisjoint(mode.active_categories)

    def words(self, category=None):
        if category is None:
            return set(self.entries)
        return {w for w, cats in self.entries.items() if category in cats}

    def __len__(self):
        return len(self.entries)

    def __contains__(self, word):
        return word.lower() in self.entries


DEFAULT_LEXICON_PATH = resources.files("contentgen.data").joinpath("function_words.txt")


def parse_function_lexicon(text: str) -> dict:
    entries: dict[str, set] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tag, sep, words = line.partition(":")
        tag = tag.strip().lower()
        if not sep or tag not in CATEGORIES:
            raise ValueError(f"line {n}: unknown function-word category {tag!r}")
        for w in words.split():
            entries.setdefault(w.lower(), set()).add(tag)
    return entries


def load_function_lexicon(path=None, corpus_vocab=None) -> FunctionLexicon:
    """Read a ``category: w1 w2 ...`` file, keeping only words seen in ``corpus_vocab``.

    A word is also kept when one of its clitic forms occurs in the corpus.
    With no vocabulary every listed word is kept.
    """
    if path is None:
        text = DEFAULT_LEXICON_PATH.read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    entries = parse_function_lexicon(text)
    if not entries:
        log.warning("function-word lexicon %s is empty", path)
    if corpus_vocab is not None:
        forms: dict[str, set] = {}
        for clitic, word in CLITIC_FORMS.items():
            forms.setdefault(word, set()).add(clitic)
        entries = {
            w: cats
            for w, cats in entries.items()
            if w in corpus_vocab or any(c in corpus_vocab for c in forms.get(w, ()))
        }
    return FunctionLexicon({w: frozenset(c) for w, c in entries.items()})


# Lemmatizer ---------------------------------------------------------------

_IRREGULAR = """
be: am are is was were been being 's 're 'm
have: has had having 've
do: does did done doing
go: goes went gone going
make: made making makes
take: took taken taking takes
come: came coming comes
get: got gotten getting
give: gave given giving
say: said says saying
see: saw seen seeing sees
know: knew known
think: thought
tell: told
find: found
feel: felt
leave: left leaving
keep: kept
meet: met
pay: paid
buy: bought
bring: brought
begin: began begun beginning
break: broke broken
choose: chose chosen choosing
drive: drove driven driving
eat: ate eaten
fall: fell fallen
fly: flew flown flies
forget: forgot forgotten forgetting
grow: grew grown
hear: heard
hold: held
hurt: hurts
lose: lost losing
mean: meant
put: puts putting
read: reads reading
ride: rode ridden riding
ring: rang rung
run: ran running runs
sell: sold
send: sent
set: sets setting
shut: shuts shutting
sing: sang sung
sit: sat sitting sits
sleep: slept
speak: spoke spoken
spend: spent
stand: stood
steal: stole stolen
swim: swam swum swimming
teach: taught
throw: threw thrown
understand: understood
wake: woke woken waking
wear: wore worn
win: won winning
write: wrote written writing
catch: caught catches
fight: fought
lead: led
lend: lent
light: lit
build: built
hang: hung
hide: hid hidden hiding
bite: bit bitten biting
blow: blew blown
draw: drew drawn
drink: drank drunk
freeze: froze frozen freezing
shake: shook shaken shaking
shoot: shot
stick: stuck
strike: struck
swear: swore sworn
tear: tore torn
cost: costs costing
cut: cuts cutting
let: lets letting
quit: quits quitting
add: adds adding added
can: could
will: would
shall: should
may: might
lie: lay lain lying lies
die: dying dies died
tie: tying ties tied
man: men
woman: women
child: children
person: people
foot: feet
tooth: teeth
mouse: mice
wife: wives
knife: knives
life: lives
leaf: leaves
shelf: shelves
half: halves
thief: thieves
potato: potatoes
tomato: tomatoes
hero: heroes
need: needs needed needing
"""

# Words that look inflected but are base forms.
_STABLE = set(
    """
    news series species always perhaps sometimes thanks clothes glasses
    trousers jeans pants scissors politics economics mathematics maths physics
    business address dress across various famous serious previous nervous
    anxious delicious obvious curious during morning evening ceiling wedding meeting
    thing nothing something anything everything king sing ring bring string
    spring swing wing interesting boring amazing exciting everything
    red bed shed hundred need speed seed feed indeed tired
    bus gas plus yes this his hers its is was has does
    lens bias chaos canvas
    """.split()
)


def _build_exceptions():
    table = {}
    for line in _IRREGULAR.strip().splitlines():
        base, _, forms = line.partition(":")
        for f in forms.split():
            table[f] = base.strip()
    return table


EXCEPTIONS = _build_exceptions()
_VOWELS = set("aeiou")
_ALPHA = re.compile(r"^[a-z][a-z'-]*$")


def _is_cvc(stem):
    if len(stem) < 3:
        return False
    a, b, c = stem[-3], stem[-2], stem[-1]
    return a not in _VOWELS and b in _VOWELS and c not in _VOWELS and c not in "wxy"


def _restore_e(stem):
    """Decide whether a stripped -ing/-ed stem needs its silent e back."""
    if len(stem) >= 2 and stem[-1] == stem[-2] and stem[-1] not in "lsz":
        return stem[:-1]
    if stem[-1] in "vz" or stem.endswith(("rg", "dg")):
        return stem + "e"
    if len(stem) >= 2 and stem[-1] in "sc" and stem[-2] in _VOWELS | {"n", "r"}:
        return stem + "e"
    if len(stem) >= 5 and stem.endswith(("at", "ang")):
        return stem + "e"
    if _is_cvc(stem) and (len(stem) == 3 or (len(stem) == 4 and stem[0] not in _VOWELS and stem[1] not in _VOWELS)):
        return stem + "e"
    return stem


def _has_vowel(s):
    return any(ch in _VOWELS or ch == "y" for ch in s)


def _strip_once(w):
    if w in EXCEPTIONS:
        return EXCEPTIONS[w]
    if len(w) < 4 or w in _STABLE or not _ALPHA.match(w):
        return w
    if w.endswith("ies") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("ied") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("es"):
        stem = w[:-2]
        if stem.endswith(("s", "x", "z", "ch", "sh")):
            return stem
        return w[:-1]
    if w.endswith("s") and not w.endswith(("ss", "us", "is", "'s")):
        return w[:-1]
    if w.endswith("ing") and not w.endswith("thing"):
        stem = w[:-3]
        if len(stem) >= 2 and _has_vowel(stem):
            return _restore_e(stem)
        return w
    if w.endswith("eed") and len(w) > 5:
        return w[:-1]
    if w.endswith("ed") and not w.endswith("eed"):
        stem = w[:-2]
        if len(stem) >= 2 and _has_vowel(stem):
            return _restore_e(stem)
    return w


def lemmatize(word: str) -> str:
    """Map an inflected word to its lemma.

    Exceptions are consulted first, then suffix rules; rules repeat until the
    word stops changing, so the result is always a fixed point.
    """
    w = word.lower()
    while True:
        nxt = _strip_once(w)
        if nxt == w:
            return w
        w = nxt


@dataclass
class ContentSequence:
    lemmas: list[str]
    source_positions: list[int]

    def __len__(self):
        return len(self.lemmas)

    def __iter__(self):
        return iter(self.lemmas)


def extract_content_sequence(sentence, lex: FunctionLexicon, mode: ExtractionMode) -> ContentSequence:
    """Drop active function words and lemmatize what remains, keeping order.

    Pronouns that survive (TRAINING mode) are kept as written.
    """
    lemmas, positions = [], []
    for i, tok in enumerate(sentence):
        if lex.is_function_word(tok, mode):
            continue
        if "pronoun" in lex.categories(tok) or "punctuation" in lex.categories(tok):
            lemmas.append(tok)
        else:
            lemmas.append(lemmatize(tok))
        positions.append(i)
    return ContentSequence(lemmas, positions)


def content_pool(vocab, lex: FunctionLexicon, mode=ExtractionMode.TRAINING):
    """Ids of non-special vocabulary entries that are not active function words."""
    from .corpus import SPECIALS

    return [
        i
        for i, tok in enumerate(vocab)
        if i >= len(SPECIALS) and not lex.is_function_word(tok, mode)
    ]


NOISE_OPS = ("remove", "repeat", "insert")


def inject_noise(c, rng, insert_pool, return_op=False):
    """Apply one uniformly chosen Remove/Repeat/Insert edit to the sequence ``c``.

    ``rng`` is a ``numpy.random.Generator``. An empty sequence is returned
    unchanged.
    """
    c = list(c)
    if not c:
        return (c, None) if return_op else c
    op = NOISE_OPS[int(rng.integers(3))]
    if op == "remove":
        i = int(rng.integers(len(c)))
        out = c[:i] + c[i + 1 :]
    elif op == "repeat":
        i = int(rng.integers(len(c)))
        out = c[: i + 1] + [c[i]] + c[i + 1 :]
    else:
        word = insert_pool[int(rng.integers(len(insert_pool)))]
        i = int(rng.integers(len(c) + 1))
        out = c[:i] + [word] + c[i:]
    return (out, op) if return_op else out
