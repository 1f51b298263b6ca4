"""Parallel-corpus hygiene and partitioning.

A corpus on disk is three aligned files sharing a prefix ``P``: source
text ``P.src.txt`` and target text ``P.tgt.txt`` (UTF-8, one sentence per
line) plus an id map ``P.ids.tsv`` with header columns sentence_id,
doc_id, domain_id, line_number (0-based line in the text files). This
keeps the text directly usable by any MT toolkit while ids stay attached.

Cleaning tokenizes by whitespace and classifies characters with the
Unicode alphabetic property (``str.isalpha``), whitespace excluded from
the character count; both choices are configurable via the rule
thresholds. All sampling and splitting is reproducible from the seed.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainkitError


class TooFewDocumentsError(DomainkitError):
    pass


class InsufficientDomainError(DomainkitError):
    def __init__(self, domain_id: int, available: int, requested: int):
        super().__init__(
            f"domain {domain_id} has {available} pairs, need {requested}"
        )
        self.domain_id = domain_id
        self.available = available


class UnassignedSentenceError(DomainkitError):
    pass


class PlanViolationError(DomainkitError):
    pass


@dataclass(frozen=True)
class SentencePair:
    sentence_id: int
    doc_id: int
    domain_id: int
    source: str
    target: str


@dataclass
class ParallelCorpus:
    pairs: list[SentencePair]

    def __len__(self) -> int:
        return len(self.pairs)

    def validate(self) -> None:
        seen = set()
        for p in self.pairs:
            if p.sentence_id in seen:
                raise DomainkitError(f"duplicate sentence_id {p.sentence_id}")
            seen.add(p.sentence_id)
            if p.doc_id < 0:
                raise DomainkitError(f"sentence {p.sentence_id}: doc_id must be >= 0")

    def content_digest(self) -> str:
        h = hashlib.sha256()
        for p in self.pairs:
            h.update(
                f"{p.sentence_id}\t{p.doc_id}\t{p.domain_id}\t{p.source}\t{p.target}\n".encode()
            )
        return h.hexdigest()


PARTITION_LEVELS = ("sentence", "document")


@dataclass
class PartitionPlan:
    assignment: dict[int, int]  # sentence_id -> cluster_id
    k: int
    level: str  # "sentence" or "document"

    @classmethod
    def from_cluster_assignment(cls, assignment, k: int, level: str) -> "PartitionPlan":
        if level not in PARTITION_LEVELS:
            raise DomainkitError(f"unknown partition level {level!r}")
        mapping = {
            int(i): int(c) for i, c in zip(assignment.item_ids, assignment.labels)
        }
        return cls(mapping, int(k), level)


# ---------------------------------------------------------------------------
# corpus file IO

def corpus_paths(prefix) -> tuple[Path, Path, Path]:
    p = str(prefix)
    return Path(p + ".src.txt"), Path(p + ".tgt.txt"), Path(p + ".ids.tsv")


def read_corpus(src_path, tgt_path, ids_path) -> ParallelCorpus:
    with open(src_path, encoding="utf-8") as f:
        src_lines = f.read().splitlines()
    with open(tgt_path, encoding="utf-8") as f:
        tgt_lines = f.read().splitlines()
    if len(src_lines) != len(tgt_lines):
        raise DomainkitError(
            f"{src_path} has {len(src_lines)} lines but {tgt_path} has {len(tgt_lines)}"
        )
    pairs = []
    with open(ids_path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        if header != ["sentence_id", "doc_id", "domain_id", "line_number"]:
            raise DomainkitError(f"{ids_path}: unexpected id-map header {header!r}")
        for lineno, line in enumerate(f, start=2):
            sid, did, dom, ln = line.rstrip("\n").split("\t")
            ln = int(ln)
            if not (0 <= ln < len(src_lines)):
                raise DomainkitError(f"{ids_path}:{lineno}: line_number {ln} out of range")
            pairs.append(
                SentencePair(int(sid), int(did), int(dom), src_lines[ln], tgt_lines[ln])
            )
    corpus = ParallelCorpus(pairs)
    corpus.validate()
    return corpus


def read_corpus_prefix(prefix) -> ParallelCorpus:
    return read_corpus(*corpus_paths(prefix))


def write_corpus(corpus: ParallelCorpus, src_path, tgt_path, ids_path) -> None:
    with open(src_path, "w", encoding="utf-8") as fs, open(
        tgt_path, "w", encoding="utf-8"
    ) as ft, open(ids_path, "w", encoding="utf-8") as fi:
        fi.write("sentence_id\tdoc_id\tdomain_id\tline_number\n")
        for i, p in enumerate(corpus.pairs):
            fs.write(p.source + "\n")
            ft.write(p.target + "\n")
            fi.write(f"{p.sentence_id}\t{p.doc_id}\t{p.domain_id}\t{i}\n")


def write_corpus_prefix(corpus: ParallelCorpus, prefix) -> None:
    write_corpus(corpus, *corpus_paths(prefix))


# ---------------------------------------------------------------------------
# cleaning

RULE_EMPTY = "empty"
RULE_TOO_LONG = "too_long"
RULE_LENGTH_RATIO = "length_ratio"
RULE_NON_ALPHABETIC = "non_alphabetic"
CLEAN_RULES = (RULE_EMPTY, RULE_TOO_LONG, RULE_LENGTH_RATIO, RULE_NON_ALPHABETIC)


def _non_alpha_fraction_exceeds(text: str, alpha_frac: float) -> bool:
    counted = 0
    non_alpha = 0
    for ch in text:
        if ch.isspace():
            continue
        counted += 1
        if not ch.isalpha():
            non_alpha += 1
    return counted > 0 and non_alpha > alpha_frac * counted


def discard_reason(
    pair: SentencePair,
    max_tokens: int = 100,
    ratio: float = 9.0,
    alpha_frac: float = 0.5,
) -> str | None:
    """First cleaning rule the pair violates, or None if it is kept.

    Rules, in order: empty (or whitespace-only) side; more than
    ``max_tokens`` whitespace tokens on either side; longer side at least
    ``ratio`` times the shorter (in tokens); strictly more than
    ``alpha_frac`` of either side's non-whitespace characters
    non-alphabetic.
    """
    if pair.source.strip() == "" or pair.target.strip() == "":
        return RULE_EMPTY
    n_src = len(pair.source.split())
    n_tgt = len(pair.target.split())
    if n_src > max_tokens or n_tgt > max_tokens:
        return RULE_TOO_LONG
    if max(n_src, n_tgt) >= ratio * min(n_src, n_tgt):
        return RULE_LENGTH_RATIO
    if _non_alpha_fraction_exceeds(pair.source, alpha_frac) or _non_alpha_fraction_exceeds(
        pair.target, alpha_frac
    ):
        return RULE_NON_ALPHABETIC
    return None


def clean(
    corpus: ParallelCorpus,
    max_tokens: int = 100,
    ratio: float = 9.0,
    alpha_frac: float = 0.5,
) -> tuple[ParallelCorpus, dict[str, int]]:
    """Drop noisy pairs; returns the surviving corpus and per-rule counts.

    Survivor order is preserved; each discarded pair is counted under the
    first rule it violated.
    """
    kept = []
    counts = {rule: 0 for rule in CLEAN_RULES}
    for pair in corpus.pairs:
        reason = discard_reason(pair, max_tokens, ratio, alpha_frac)
        if reason is None:
            kept.append(pair)
        else:
            counts[reason] += 1
    return ParallelCorpus(kept), counts


# ---------------------------------------------------------------------------
# dedup, splits, sampling, partitioning

def dedup_eval(train: ParallelCorpus, eval_corpus: ParallelCorpus) -> ParallelCorpus:
    """Remove eval pairs whose (source, target) already occur in training.

    Match is exact byte equality after trimming trailing newlines only.
    """
    seen = {
        (p.source.rstrip("\n"), p.target.rstrip("\n")) for p in train.pairs
    }
    kept = [
        p
        for p in eval_corpus.pairs
        if (p.source.rstrip("\n"), p.target.rstrip("\n")) not in seen
    ]
    return ParallelCorpus(kept)


def split_documents(
    corpus: ParallelCorpus, fractions: tuple[float, float, float], seed: int
) -> tuple[ParallelCorpus, ParallelCorpus, ParallelCorpus]:
    """Document-consistent train/dev/test split.

    Documents are shuffled by seed, then each is greedily handed to the
    split with the largest remaining sentence-count deficit, so no document
    ever straddles splits and counts track the requested fractions to
    within the largest document size.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise DomainkitError(f"fractions must be three positives, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DomainkitError(f"fractions must sum to 1, got {sum(fractions)}")

    doc_members: dict[int, list[int]] = {}
    for i, p in enumerate(corpus.pairs):
        doc_members.setdefault(p.doc_id, []).append(i)
    if len(doc_members) < 3:
        raise TooFewDocumentsError(
            f"need at least 3 documents to split, got {len(doc_members)}"
        )

    rng = np.random.default_rng(seed)
    doc_ids = sorted(doc_members)
    order = rng.permutation(len(doc_ids))

    total = len(corpus)
    targets = [f * total for f in fractions]
    sizes = [0, 0, 0]
    buckets: tuple[list[int], list[int], list[int]] = ([], [], [])
    for j in order:
        doc = doc_ids[int(j)]
        deficits = [targets[s] - sizes[s] for s in range(3)]
        s = int(np.argmax(deficits))  # ties go to the earlier split
        buckets[s].extend(doc_members[doc])
        sizes[s] += len(doc_members[doc])

    out = []
    for members in buckets:
        members.sort()  # preserve original corpus order inside each split
        out.append(ParallelCorpus([corpus.pairs[i] for i in members]))
    return out[0], out[1], out[2]


def sample_per_domain(
    corpus: ParallelCorpus, n_per_domain: int, seed: int
) -> ParallelCorpus:
    """Uniform seeded sample of exactly ``n_per_domain`` pairs per domain.

    Original corpus order is preserved within the sample.
    """
    by_domain: dict[int, list[int]] = {}
    for i, p in enumerate(corpus.pairs):
        by_domain.setdefault(p.domain_id, []).append(i)

    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    for domain in sorted(by_domain):
        idx = by_domain[domain]
        if len(idx) < n_per_domain:
            raise InsufficientDomainError(domain, len(idx), n_per_domain)
        pick = rng.choice(len(idx), size=n_per_domain, replace=False)
        chosen.extend(idx[int(j)] for j in pick)
    chosen.sort()
    return ParallelCorpus([corpus.pairs[i] for i in chosen])


def partition_by_cluster(
    corpus: ParallelCorpus, plan: PartitionPlan, out_dir
) -> dict:
    """Write one sub-corpus per cluster plus a JSON manifest.

    The concatenation of the outputs is a permutation of the input and the
    original order is preserved within each cluster. Returns the manifest.
    """
    out_dir = Path(out_dir)
    buckets: dict[int, list[SentencePair]] = {c: [] for c in range(plan.k)}
    doc_cluster: dict[int, int] = {}
    for p in corpus.pairs:
        if p.sentence_id not in plan.assignment:
            raise UnassignedSentenceError(
                f"sentence {p.sentence_id} missing from the partition plan"
            )
        c = plan.assignment[p.sentence_id]
        if not (0 <= c < plan.k):
            raise PlanViolationError(f"sentence {p.sentence_id}: cluster {c} not in [0, {plan.k})")
        if plan.level == "document":
            prev = doc_cluster.setdefault(p.doc_id, c)
            if prev != c:
                raise PlanViolationError(
                    f"document {p.doc_id} is split across clusters {prev} and {c}"
                )
        buckets[c].append(p)

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "k": plan.k,
        "level": plan.level,
        "total": len(corpus),
        "input_checksum": corpus.content_digest(),
        "clusters": {},
    }
    for c in range(plan.k):
        sub = ParallelCorpus(buckets[c])
        prefix = out_dir / f"cluster_{c}"
        write_corpus_prefix(sub, prefix)
        manifest["clusters"][str(c)] = {
            "count": len(sub),
            "files": {
                kind: path.name
                for kind, path in zip(("src", "tgt", "ids"), corpus_paths(prefix))
            },
            "checksums": {
                path.name: hashlib.sha256(path.read_bytes()).hexdigest()
                for path in corpus_paths(prefix)
            },
        }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest
