"""CoNLL reading/writing, lexical preprocessing and vocabulary.

Only a four-column subset of CoNLL-X is used::

    ID <TAB> FORM <TAB> POS <TAB> HEAD

Blocks are separated by a single blank line.  A HEAD of ``_`` marks an
unannotated token; a block whose heads are all ``_`` yields a sentence
without a tree.  Lines starting with ``#`` are comments.
"""

import hashlib
import io
import os
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

ALL_LOWER = "ALL_LOWER"
FIRST_UPPER = "FIRST_UPPER"
ALL_UPPER = "ALL_UPPER"
MIXED = "MIXED"
NO_LETTERS = "NO_LETTERS"
CAP_CLASSES = (ALL_LOWER, FIRST_UPPER, ALL_UPPER, MIXED, NO_LETTERS)

UNKNOWN = "<UNKNOWN>"
ROOT = "<ROOT>"
EOC = "<EOC>"
RESERVED = (UNKNOWN, ROOT, EOC)

_DIGIT = re.compile(r"[0-9]")


class ConllError(ValueError):
    pass


def normalize(word: str) -> str:
    """Lowercase and replace every digit by '0'."""
    return _DIGIT.sub("0", word.lower())


def cap_class(word: str) -> str:
    letters = [c for c in word if c.isalpha()]
    if not letters:
        return NO_LETTERS
    if all(c.islower() for c in letters):
        return ALL_LOWER
    if all(c.isupper() for c in letters):
        # a single capital letter counts as first-upper ("I", "A")
        return ALL_UPPER if len(letters) > 1 else FIRST_UPPER
    if letters[0].isupper() and all(c.islower() for c in letters[1:]):
        return FIRST_UPPER
    return MIXED


@dataclass(frozen=True)
class Token:
    surface: str
    pos: str
    norm: str = ""
    cap: str = ""

    def __post_init__(self):
        if not self.norm:
            object.__setattr__(self, "norm", normalize(self.surface))
        if not self.cap:
            object.__setattr__(self, "cap", cap_class(self.surface))


@dataclass(frozen=True)
class Sentence:
    """Tokens at positions 1..n; position 0 is the implicit ROOT."""

    tokens: Tuple[Token, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValueError("a sentence needs at least one token")

    def __len__(self):
        return len(self.tokens)

    @property
    def words(self) -> List[str]:
        return [t.norm for t in self.tokens]

    @property
    def tags(self) -> List[str]:
        return [t.pos for t in self.tokens]

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[str, str]]) -> "Sentence":
        return cls(tuple(Token(w, p) for w, p in pairs))


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class DepTree:
    """Head vector; ``heads[i - 1]`` is the head of token ``i`` (0 = ROOT)."""

    heads: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))

    def __len__(self):
        return len(self.heads)

    def head(self, i: int) -> int:
        return self.heads[i - 1]

    def children(self) -> List[List[int]]:
        """children[h] lists the dependents of h (0..n) in linear order."""
        kids: List[List[int]] = [[] for _ in range(len(self.heads) + 1)]
        for d, h in enumerate(self.heads, start=1):
            kids[h].append(d)
        return kids

    def arcs(self) -> List[Tuple[int, int]]:
        return [(h, d) for d, h in enumerate(self.heads, start=1)]

    def check(self, n: Optional[int] = None):
        """Raise TreeError unless this is a projective single-rooted tree."""
        problem = tree_problem(self.heads)
        if problem is None and n is not None and n != len(self.heads):
            problem = f"tree has {len(self.heads)} heads for a sentence of length {n}"
        if problem:
            raise TreeError(problem)

    def is_valid(self) -> bool:
        return tree_problem(self.heads) is None


def tree_problem(heads: Sequence[int]) -> Optional[str]:
    """Describe why ``heads`` is not a valid projective tree, or None."""
    n = len(heads)
    if n == 0:
        return "empty tree"
    for d, h in enumerate(heads, start=1):
        if not 0 <= h <= n or h == d:
            return f"token {d} has invalid head {h}"
    roots = [d for d, h in enumerate(heads, start=1) if h == 0]
    if len(roots) != 1:
        return f"expected exactly one root, found {len(roots)}"
    # every token must reach ROOT
    for d in range(1, n + 1):
        seen = set()
        x = d
        while x != 0:
            if x in seen:
                return f"cycle through token {d}"
            seen.add(x)
            x = heads[x - 1]
    for d, h in enumerate(heads, start=1):
        if h == 0:
            continue
        lo, hi = min(h, d), max(h, d)
        for m in range(lo + 1, hi):
            x = m
            while x != 0 and x != h:
                x = heads[x - 1]
            if x != h:
                return f"arc {h}->{d} is non-projective over token {m}"
    return None


@dataclass
class Treebank:
    """Sentences paired with (possibly absent) trees."""

    sentences: List[Sentence] = field(default_factory=list)
    trees: List[Optional[DepTree]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.sentences) != len(self.trees):
            raise ValueError("sentences and trees differ in number")
        for i, (s, t) in enumerate(zip(self.sentences, self.trees)):
            if t is not None and len(t) != len(s):
                raise ValueError(f"entry {i}: tree length {len(t)} != sentence length {len(s)}")

    @classmethod
    def from_sentences(cls, sentences: Iterable[Sentence]) -> "Treebank":
        sentences = list(sentences)
        return cls(sentences, [None] * len(sentences))

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(zip(self.sentences, self.trees))

    def __getitem__(self, i):
        return self.sentences[i], self.trees[i]

    def __eq__(self, other):
        if not isinstance(other, Treebank):
            return NotImplemented
        return self.sentences == other.sentences and self.trees == other.trees

    @property
    def annotated(self) -> bool:
        return all(t is not None for t in self.trees)

    def checksum(self) -> str:
        return hashlib.sha256(dumps_conll(self).encode("utf-8")).hexdigest()[:16]


def filter_by_length(tb: Treebank, max_len: int) -> Treebank:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    keep = [i for i, s in enumerate(tb.sentences) if len(s) <= max_len]
    return Treebank([tb.sentences[i] for i in keep], [tb.trees[i] for i in keep])


def _format_block(s: Sentence, t: Optional[DepTree], comments: Sequence[str] = ()) -> str:
    lines = [f"#{c}" for c in comments]
    for i, tok in enumerate(s.tokens, start=1):
        head = "_" if t is None else str(t.heads[i - 1])
        lines.append(f"{i}\t{tok.surface}\t{tok.pos}\t{head}")
    return "\n".join(lines) + "\n\n"


def dumps_conll(tb: Treebank) -> str:
    return "".join(_format_block(s, t) for s, t in tb)


def write_conll(tb: Treebank, path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(dumps_conll(tb))
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror or e}") from e


def iter_conll_blocks(lines: Iterable[str], name: str = "<string>"):
    """Yield (comments, sentence, tree-or-None, first line number) per block."""
    comments: List[str] = []
    rows: List[Tuple[str, str, str]] = []
    start = None

    def flush():
        ids = [r[0] for r in rows]
        sent = Sentence(tuple(Token(r[1], r[2]) for r in rows))
        heads = [r[3] for r in rows]
        if all(h == "_" for h in heads):
            tree = None
        elif any(h == "_" for h in heads):
            raise ConllError(f"{name}:{start}: block mixes annotated and unannotated heads")
        else:
            tree = DepTree(tuple(int(h) for h in heads))
        if ids != [str(i) for i in range(1, len(ids) + 1)]:
            raise ConllError(f"{name}:{start}: token ids are not 1..{len(ids)}")
        return sent, tree

    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            if rows:
                sent, tree = flush()
                yield comments, sent, tree, start
            elif comments:
                raise ConllError(f"{name}:{lineno}: comment block without tokens")
            comments, rows, start = [], [], None
            continue
        if start is None:
            start = lineno
        if line.startswith("#"):
            if rows:
                raise ConllError(f"{name}:{lineno}: comment inside a token block")
            comments.append(line[1:])
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise ConllError(f"{name}:{lineno}: expected 4 tab-separated columns, got {len(cols)}")
        head = cols[3]
        if head != "_":
            try:
                int(head)
            except ValueError:
                raise ConllError(f"{name}:{lineno}: HEAD {head!r} is not an integer") from None
        rows.append((cols[0], cols[1], cols[2], head))
    if rows:
        sent, tree = flush()
        yield comments, sent, tree, start


def loads_conll(text: str, name: str = "<string>") -> Treebank:
    tb = Treebank()
    for _, s, t, _ in iter_conll_blocks(io.StringIO(text), name):
        tb.sentences.append(s)
        tb.trees.append(t)
    return tb


def read_conll(path) -> Treebank:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, encoding="utf-8") as f:
        return loads_conll(f.read(), str(path))


class Vocabulary:
    """Dense ids for normalized words above a count threshold, plus POS ids.

    Word ids 0, 1, 2 are reserved for UNKNOWN, ROOT and EOC; POS ids 0 and 1
    for ROOT and unseen tags.
    """

    def __init__(self, words: Sequence[str] = (), counts: Optional[Dict[str, int]] = None,
                 tags: Sequence[str] = ()):
        self.words: List[str] = list(RESERVED) + [w for w in words if w not in RESERVED]
        self.word_ids: Dict[str, int] = {w: i for i, w in enumerate(self.words)}
        self.counts: Dict[str, int] = dict(counts or {})
        self.tags: List[str] = [ROOT, UNKNOWN] + [t for t in tags if t not in (ROOT, UNKNOWN)]
        self.pos_ids: Dict[str, int] = {t: i for i, t in enumerate(self.tags)}

    unknown_id = 0
    root_id = 1
    eoc_id = 2
    root_pos_id = 0
    unknown_pos_id = 1

    def __len__(self):
        return len(self.words)

    def __eq__(self, other):
        return (isinstance(other, Vocabulary) and self.words == other.words
                and self.tags == other.tags and self.counts == other.counts)

    def word_id(self, norm: str) -> int:
        return self.word_ids.get(norm, self.unknown_id)

    def pos_id(self, tag: str) -> int:
        return self.pos_ids.get(tag, self.unknown_pos_id)

    def lexical(self, norm: str) -> str:
        """The word as seen by the models: itself if known, else UNKNOWN."""
        return norm if norm in self.word_ids else UNKNOWN

    def digest(self) -> str:
        if getattr(self, "_digest", None) is None:
            self._digest = self._compute_digest()
        return self._digest

    def _compute_digest(self) -> str:
        h = hashlib.sha256()
        h.update("\n".join(self.words).encode("utf-8"))
        h.update(b"\0")
        h.update("\n".join(self.tags).encode("utf-8"))
        return h.hexdigest()[:16]

    def dumps(self) -> str:
        lines = [f"{w}\t{i}\t{self.counts.get(w, 0)}" for i, w in enumerate(self.words)]
        lines += [f"#pos\t{t}\t{i}" for i, t in enumerate(self.tags)]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        words, counts, tags = [], {}, []
        for line in text.splitlines():
            if not line:
                continue
            cols = line.split("\t")
            if cols[0] == "#pos":
                tags.append(cols[1])
                continue
            w, i, c = cols
            if int(i) != len(words):
                raise ValueError(f"vocabulary ids not dense at {w!r}")
            words.append(w)
            if int(c):
                counts[w] = int(c)
        v = cls(words[len(RESERVED):], counts, tags[2:])
        if v.words != words:
            raise ValueError("reserved ids out of place")
        return v

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            return cls.loads(f.read())


def build_vocab(sentences: Iterable[Sentence], min_count: int = 3) -> Vocabulary:
    """Words seen at least ``min_count`` times get ids (default: more than twice)."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Dict[str, int] = {}
    tags = set()
    for s in sentences:
        for t in s.tokens:
            counts[t.norm] = counts.get(t.norm, 0) + 1
            tags.add(t.pos)
    kept = sorted((w for w, c in counts.items() if c >= min_count and w not in RESERVED),
                  key=lambda w: (-counts[w], w))
    return Vocabulary(kept, {w: counts[w] for w in kept}, sorted(tags))
