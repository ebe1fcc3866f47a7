"""Retrieval-augmented few-shot classification.

A Dimension declares the closed label set and the instruction text; the
classifier embeds the target, pulls the K most similar labeled examples
from a vector index, renders an instruction / demonstrations / target
prompt and parses the completion back into a label from the set.

`evaluate` reproduces the standard protocol: deterministic 70/30
train-test split per seed, optional folding of long-tail label sets into
top-N plus "others", demonstrations drawn from the train side only.
"""

from __future__ import annotations

import random
import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import EmptyPool, LabelNotInSet, UnparseableLabel
from .gateway import Gateway
from .index import VectorIndex

OTHERS_LABEL = "others"

_TERMINAL_PUNCT = ".,:;!?"


def normalize_label(value: str) -> str:
    """Lowercase, trim, collapse whitespace, strip terminal punctuation."""
    text = " ".join(value.strip().lower().split())
    return text.rstrip(_TERMINAL_PUNCT).strip()


@dataclass(frozen=True)
class Dimension:
    """A classification dimension: name, label set, instruction template.

    The instruction may use {name} and {labels} slots; labels are unique
    after normalization.
    """

    name: str
    labels: tuple[str, ...]
    instruction: str = (
        "You are labeling user feedback along the dimension \"{name}\".\n"
        "Read the feedback and answer with exactly one label from: {labels}."
    )

    def __post_init__(self) -> None:
        normalized = tuple(normalize_label(l) for l in self.labels)
        if len(set(normalized)) != len(normalized) or not normalized:
            raise ValueError("labels must be non-empty and unique after normalization")
        if any(not l for l in normalized):
            raise ValueError("empty label after normalization")
        object.__setattr__(self, "labels", normalized)

    def rendered_instruction(self) -> str:
        return self.instruction.format(name=self.name, labels=", ".join(self.labels))


@dataclass
class Demonstration:
    text: str
    label: str
    similarity: float


@dataclass
class PromptBundle:
    instruction: str
    demonstrations: list[Demonstration]
    target: str
    rendered: str


@dataclass
class ClassificationResult:
    label: str
    raw_completion: str
    demos_used: list[Demonstration]


def render_prompt(
    instruction: str, demonstrations: list[Demonstration], target: str
) -> str:
    parts = [instruction.rstrip()]
    for demo in demonstrations:
        parts.append(f"Feedback: {demo.text}\nLabel: {demo.label}")
    parts.append(f"Feedback: {target}\nLabel:")
    return "\n\n".join(parts)


class IclClassifier:
    """Few-shot classifier over a finalized demonstration index.

    The index entries carry payload {"text": ..., "label": ...}; build one
    with `build_demo_index`. Stateless apart from the gateway and index,
    so concurrent classification is safe.
    """

    def __init__(self, gateway: Gateway, demo_index: VectorIndex | None = None):
        self.gateway = gateway
        self.demo_index = demo_index

    def build_prompt(self, target_text: str, dimension: Dimension, k: int) -> PromptBundle:
        """Assemble the prompt. Demonstrations are ordered by ascending
        similarity so the most similar example sits adjacent to the target;
        k=0 produces a zero-shot prompt with no demonstration block."""
        demos: list[Demonstration] = []
        if k > 0:
            if self.demo_index is None or len(self.demo_index) == 0:
                raise EmptyPool("no labeled demonstrations indexed")
            query = self.gateway.embed([target_text])[0]
            hits = self.demo_index.top_k(query, k)
            for entry_id, score in hits:
                payload = self.demo_index.get(entry_id).payload
                demos.append(
                    Demonstration(
                        text=payload["text"], label=payload["label"], similarity=score
                    )
                )
            demos.sort(key=lambda d: (d.similarity, d.text))
        instruction = dimension.rendered_instruction()
        rendered = render_prompt(instruction, demos, target_text)
        return PromptBundle(
            instruction=instruction,
            demonstrations=demos,
            target=target_text,
            rendered=rendered,
        )

    def classify(
        self, target_text: str, dimension: Dimension, k: int
    ) -> ClassificationResult:
        bundle = self.build_prompt(target_text, dimension, k)
        completion = self.gateway.chat([("user", bundle.rendered)])
        try:
            label = parse_label(completion, dimension.labels)
        except UnparseableLabel:
            # One bounded re-ask with an explicit answer-format reminder.
            retry = self.gateway.chat(
                [
                    ("user", bundle.rendered),
                    ("assistant", completion),
                    (
                        "user",
                        "Answer with exactly one label from: "
                        + ", ".join(dimension.labels),
                    ),
                ]
            )
            label = parse_label(retry, dimension.labels)
            completion = retry
        return ClassificationResult(
            label=label, raw_completion=completion, demos_used=bundle.demonstrations
        )


def parse_label(completion: str, labels: tuple[str, ...]) -> str:
    """First label (by position in the completion) whose normalized form
    appears as a whole phrase; ties at the same position go to the longest
    label, so "non-informative" wins over its "informative" suffix."""
    haystack = normalize_label(completion)
    best: tuple[int, int, str] | None = None
    for label in labels:
        pattern = re.compile(
            r"(?<![\w-])" + re.escape(label) + r"(?![\w-])"
        )
        match = pattern.search(haystack)
        if match is None:
            continue
        candidate = (match.start(), -len(label), label)
        if best is None or candidate < best:
            best = candidate
    if best is None:
        raise UnparseableLabel(completion, labels)
    return best[2]


def build_demo_index(
    gateway: Gateway, examples: list[tuple[str, str, str]]
) -> VectorIndex:
    """Embed (id, text, label) examples into a finalized retrieval index."""
    index = VectorIndex()
    if examples:
        vectors = gateway.embed([text for _, text, _ in examples])
        for (example_id, text, label), vec in zip(examples, vectors):
            index.add(example_id, vec, payload={"text": text, "label": label})
    return index.finalize()


# --- evaluation protocol -----------------------------------------------------


def fold_labels(
    examples: list[tuple[str, str, str]], top_n: int
) -> tuple[list[tuple[str, str, str]], list[str]]:
    """Keep the top-N most frequent labels, fold the rest into "others".

    Ties on frequency break alphabetically so the fold is deterministic.
    Returns the transformed examples and the resulting label set.
    """
    counts = Counter(normalize_label(label) for _, _, label in examples)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = {label for label, _ in ranked[:top_n]}
    folded = [
        (eid, text, normalize_label(label) if normalize_label(label) in keep else OTHERS_LABEL)
        for eid, text, label in examples
    ]
    label_set = sorted(keep)
    if len(counts) > top_n:
        label_set.append(OTHERS_LABEL)
    return folded, label_set


def split_dataset(
    ids: list[str], seed: int, train_fraction: float = 0.7
) -> tuple[list[str], list[str]]:
    """Deterministic shuffle-and-cut split; same seed, same split."""
    shuffled = list(ids)
    random.Random(seed).shuffle(shuffled)
    cut = int(len(shuffled) * train_fraction)
    return shuffled[:cut], shuffled[cut:]


@dataclass
class AccuracyReport:
    dimension: str
    k: int
    seed: int
    accuracy: float
    train_size: int
    test_size: int
    labels: list[str]
    confusion: dict[str, dict[str, int]]
    test_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "k": self.k,
            "seed": self.seed,
            "accuracy": self.accuracy,
            "train_size": self.train_size,
            "test_size": self.test_size,
            "labels": self.labels,
            "confusion": self.confusion,
            "test_ids": self.test_ids,
        }


def evaluate(
    examples: list[tuple[str, str, str]],
    dimension_name: str,
    instruction: str,
    gateway: Gateway,
    k: int,
    seed: int,
    fold_top_n: int | None = None,
    train_fraction: float = 0.7,
    on_progress=None,
    cancel_event=None,
) -> AccuracyReport:
    """Run the classification protocol on a labeled dataset.

    examples: (id, text, ground-truth label) triples, every record labeled.
    Folding (when requested) happens before the split; the demonstration
    pool is the train side only; test predictions aggregate in submission
    order.
    """
    for eid, text, label in examples:
        if not normalize_label(label):
            raise LabelNotInSet(f"record {eid!r} has an empty ground-truth label")
    if fold_top_n is not None:
        examples, label_list = fold_labels(examples, fold_top_n)
    else:
        label_list = sorted({normalize_label(l) for _, _, l in examples})
        examples = [(e, t, normalize_label(l)) for e, t, l in examples]

    by_id = {eid: (text, label) for eid, text, label in examples}
    train_ids, test_ids = split_dataset(
        [e for e, _, _ in examples], seed, train_fraction
    )
    dimension = Dimension(
        name=dimension_name, labels=tuple(label_list), instruction=instruction
    )
    demo_index = build_demo_index(
        gateway, [(eid, *by_id[eid]) for eid in train_ids]
    )
    clf = IclClassifier(gateway, demo_index)

    confusion: dict[str, dict[str, int]] = {}
    correct = 0
    for done, test_id in enumerate(test_ids):
        if cancel_event is not None and cancel_event.is_set():
            break
        text, truth = by_id[test_id]
        result = clf.classify(text, dimension, k)
        confusion.setdefault(truth, {}).setdefault(result.label, 0)
        confusion[truth][result.label] += 1
        if result.label == truth:
            correct += 1
        if on_progress is not None:
            on_progress((done + 1) / len(test_ids))
    accuracy = correct / len(test_ids) if test_ids else 0.0
    return AccuracyReport(
        dimension=dimension_name,
        k=k,
        seed=seed,
        accuracy=accuracy,
        train_size=len(train_ids),
        test_size=len(test_ids),
        labels=list(label_list),
        confusion=confusion,
        test_ids=list(test_ids),
    )
