"""Map data types to the policy sentences that disclose practices about them."""

from __future__ import annotations

from dataclasses import dataclass

from .model import Taxonomy, first_phrase
from .policy import PolicyDocument


@dataclass(frozen=True)
class PolicySegment:
    data_type: str
    text: str
    sentence_index: int
    matched_phrase: str
    offset: int


def extract_segments(doc: PolicyDocument, taxonomy: Taxonomy) -> dict[str, list[PolicySegment]]:
    """Every sentence mentioning a lexicon phrase, per type, in document order.

    ``matched_phrase`` is the first phrase in lexicon order that occurs.
    """
    result: dict[str, list[PolicySegment]] = {t: [] for t in taxonomy.ids}
    for sentence in doc.sentences:
        for type_id in taxonomy.ids:
            phrase = first_phrase(sentence.text, taxonomy.phrases(type_id))
            if phrase is not None:
                result[type_id].append(
                    PolicySegment(type_id, sentence.text, sentence.index, phrase, sentence.offset))
    return result


@dataclass(frozen=True)
class SegmentStats:
    per_type: dict[str, int]
    distinct_sentences: int


def segment_stats(result: dict[str, list[PolicySegment]]) -> SegmentStats:
    per_type = {t: len(segs) for t, segs in result.items()}
    distinct = {s.sentence_index for segs in result.values() for s in segs}
    return SegmentStats(per_type, len(distinct))
