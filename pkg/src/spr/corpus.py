"""Video registry, timeline segmentation, and annotation ingestion.

Videos are decomposed into non-overlapping fixed-length segments on a
half-open ``[start_s, end_s)`` timeline. Segment ids are globally unique
strings of the form ``<video_id>#<index>`` so that retrieval results can
be resolved back to their source video without side lookups.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping

from spr.errors import AnnotationError, FormatError

SEGMENT_ID_SEPARATOR = "#"

RELEVANCE_MIN = 1
RELEVANCE_MAX = 4


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    duration_s: float

    def __post_init__(self) -> None:
        if not self.video_id:
            raise ValueError("video_id must be non-empty")
        if SEGMENT_ID_SEPARATOR in self.video_id:
            raise ValueError(f"video_id may not contain {SEGMENT_ID_SEPARATOR!r}: {self.video_id!r}")
        if not math.isfinite(self.duration_s) or self.duration_s <= 0:
            raise ValueError(f"duration_s must be finite and positive, got {self.duration_s}")


@dataclass(frozen=True)
class SegmentationConfig:
    segment_length_s: float = 4.0
    keep_partial_tail: bool = True

    def __post_init__(self) -> None:
        if not math.isfinite(self.segment_length_s) or self.segment_length_s <= 0:
            raise ValueError(f"segment_length_s must be positive, got {self.segment_length_s}")


@dataclass(frozen=True)
class Segment:
    segment_id: str
    video_id: str
    index: int
    start_s: float
    end_s: float

    @property
    def length_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class Moment:
    """A half-open time interval within one video."""

    video_id: str
    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        if self.start_s < 0:
            raise ValueError(f"moment start must be >= 0, got {self.start_s}")
        if not self.end_s > self.start_s:
            raise ValueError(f"moment must have positive extent, got [{self.start_s}, {self.end_s})")

    @property
    def length_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class GroundTruthMoment:
    moment: Moment
    relevance: int

    def __post_init__(self) -> None:
        if not RELEVANCE_MIN <= self.relevance <= RELEVANCE_MAX:
            raise ValueError(
                f"relevance must be in [{RELEVANCE_MIN}, {RELEVANCE_MAX}], got {self.relevance}"
            )


def make_segment_id(video_id: str, index: int) -> str:
    return f"{video_id}{SEGMENT_ID_SEPARATOR}{index}"


def parse_segment_id(segment_id: str) -> tuple[str, int]:
    video_id, sep, raw_index = segment_id.rpartition(SEGMENT_ID_SEPARATOR)
    if not sep or not video_id:
        raise ValueError(f"malformed segment id {segment_id!r}")
    try:
        index = int(raw_index)
    except ValueError as exc:
        raise ValueError(f"malformed segment id {segment_id!r}") from exc
    if index < 0:
        raise ValueError(f"malformed segment id {segment_id!r}")
    return video_id, index


class Corpus:
    """Registry of videos. Sealed corpora reject further registration."""

    def __init__(self) -> None:
        self._videos: dict[str, VideoMeta] = {}
        self._sealed = False

    def register_video(self, video_id: str, duration_s: float) -> VideoMeta:
        if self._sealed:
            raise ValueError("corpus is sealed; no further registration allowed")
        if video_id in self._videos:
            raise ValueError(f"duplicate video_id {video_id!r}")
        meta = VideoMeta(video_id, float(duration_s))
        self._videos[video_id] = meta
        return meta

    def seal(self) -> None:
        self._sealed = True

    @property
    def sealed(self) -> bool:
        return self._sealed

    def video(self, video_id: str) -> VideoMeta:
        try:
            return self._videos[video_id]
        except KeyError:
            raise KeyError(f"unknown video_id {video_id!r}") from None

    def __contains__(self, video_id: str) -> bool:
        return video_id in self._videos

    def __len__(self) -> int:
        return len(self._videos)

    def __iter__(self) -> Iterator[VideoMeta]:
        return iter(self._videos.values())

    @property
    def videos(self) -> tuple[VideoMeta, ...]:
        return tuple(self._videos.values())


def segment_video(video: VideoMeta, cfg: SegmentationConfig) -> list[Segment]:
    """Cut one video into fixed-length half-open segments.

    The tail segment is clamped at the video duration when
    ``keep_partial_tail`` is set; otherwise a trailing remainder shorter
    than the segment length is dropped.
    """
    length = cfg.segment_length_s
    ratio = video.duration_s / length
    count = math.ceil(ratio) if cfg.keep_partial_tail else math.floor(ratio)
    segments = []
    for index in range(count):
        start = index * length
        end = min((index + 1) * length, video.duration_s)
        segments.append(Segment(make_segment_id(video.video_id, index), video.video_id, index, start, end))
    return segments


def segment_corpus(corpus: Corpus, cfg: SegmentationConfig) -> list[Segment]:
    """Segment every video, in registration order."""
    out: list[Segment] = []
    for video in corpus:
        out.extend(segment_video(video, cfg))
    return out


def segment_overlap_fraction(segment: Segment, moment: Moment) -> float:
    """Fraction of the segment's extent covered by the moment (0 across videos)."""
    if segment.video_id != moment.video_id:
        return 0.0
    overlap = min(segment.end_s, moment.end_s) - max(segment.start_s, moment.start_s)
    if overlap <= 0:
        return 0.0
    return overlap / segment.length_s


def load_video_manifest(source: IO[str] | str | Path) -> Corpus:
    """Read a JSON Lines video manifest into a fresh corpus."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_video_manifest(fh)
    corpus = Corpus()
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"video manifest line {lineno}: invalid JSON ({exc})") from exc
        try:
            corpus.register_video(str(record["video_id"]), float(record["duration_s"]))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"video manifest line {lineno}: expected video_id and duration_s") from exc
        except ValueError as exc:
            raise FormatError(f"video manifest line {lineno}: {exc}") from exc
    return corpus


def save_video_manifest(sink: IO[str] | str | Path, corpus: Corpus) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            save_video_manifest(fh, corpus)
        return
    for video in corpus:
        sink.write(json.dumps({"video_id": video.video_id, "duration_s": video.duration_s}) + "\n")


def write_segment_manifest(sink: IO[str] | str | Path, segments: Iterable[Segment]) -> None:
    """Emit one JSON object per segment, in the given order."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            write_segment_manifest(fh, segments)
        return
    for seg in segments:
        sink.write(
            json.dumps(
                {
                    "segment_id": seg.segment_id,
                    "video_id": seg.video_id,
                    "index": seg.index,
                    "start_s": seg.start_s,
                    "end_s": seg.end_s,
                }
            )
            + "\n"
        )


@dataclass(frozen=True)
class QueryAnnotation:
    query_id: int
    text: str
    moments: tuple[GroundTruthMoment, ...]


class AnnotationSet:
    """Ground-truth moments keyed by integer query id."""

    def __init__(self, entries: Iterable[QueryAnnotation]) -> None:
        self._entries: dict[int, QueryAnnotation] = {}
        for entry in entries:
            if entry.query_id in self._entries:
                raise AnnotationError(f"duplicate query_id {entry.query_id}")
            self._entries[entry.query_id] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[QueryAnnotation]:
        return iter(self._entries.values())

    def __contains__(self, query_id: int) -> bool:
        return query_id in self._entries

    def get(self, query_id: int) -> QueryAnnotation:
        try:
            return self._entries[query_id]
        except KeyError:
            raise KeyError(f"unknown query_id {query_id}") from None

    @property
    def query_ids(self) -> tuple[int, ...]:
        return tuple(self._entries)

    def moments_by_query(self) -> Mapping[int, tuple[GroundTruthMoment, ...]]:
        return {qid: entry.moments for qid, entry in self._entries.items()}


def load_annotations(source: IO[str] | str | Path, corpus: Corpus) -> AnnotationSet:
    """Parse an annotation document and validate it against the corpus.

    Every referenced video must exist and every moment must lie inside
    its video's duration; violations are reported with their position in
    the document.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_annotations(fh, corpus)
    try:
        doc = json.load(source)
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"invalid annotation JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("queries"), list):
        raise AnnotationError("annotation document must contain a 'queries' list")
    entries = []
    for qpos, qrec in enumerate(doc["queries"]):
        where = f"queries[{qpos}]"
        if not isinstance(qrec, dict):
            raise AnnotationError(f"{where}: expected an object")
        try:
            query_id = int(qrec["query_id"])
            text = str(qrec["query"])
            raw_moments = qrec["relevant_moments"]
        except (KeyError, TypeError, ValueError) as exc:
            raise AnnotationError(f"{where}: expected query_id, query, relevant_moments") from exc
        if not isinstance(raw_moments, list):
            raise AnnotationError(f"{where}.relevant_moments: expected a list")
        moments = []
        for mpos, mrec in enumerate(raw_moments):
            mwhere = f"{where}.relevant_moments[{mpos}]"
            try:
                video_id = str(mrec["video_id"])
                start_s = float(mrec["start_s"])
                end_s = float(mrec["end_s"])
                relevance = int(mrec["relevance"])
            except (KeyError, TypeError, ValueError) as exc:
                raise AnnotationError(f"{mwhere}: expected video_id, start_s, end_s, relevance") from exc
            if video_id not in corpus:
                raise AnnotationError(f"{mwhere}: unknown video_id {video_id!r}")
            try:
                moment = Moment(video_id, start_s, end_s)
                gt = GroundTruthMoment(moment, relevance)
            except ValueError as exc:
                raise AnnotationError(f"{mwhere}: {exc}") from exc
            if end_s > corpus.video(video_id).duration_s:
                raise AnnotationError(
                    f"{mwhere}: moment end {end_s} exceeds duration {corpus.video(video_id).duration_s}"
                )
            moments.append(gt)
        entries.append(QueryAnnotation(query_id, text, tuple(moments)))
    try:
        return AnnotationSet(entries)
    except AnnotationError:
        raise
    except ValueError as exc:
        raise AnnotationError(str(exc)) from exc


def save_annotations(sink: IO[str] | str | Path, annotations: AnnotationSet) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            save_annotations(fh, annotations)
        return
    doc = {
        "queries": [
            {
                "query_id": entry.query_id,
                "query": entry.text,
                "relevant_moments": [
                    {
                        "video_id": gt.moment.video_id,
                        "start_s": gt.moment.start_s,
                        "end_s": gt.moment.end_s,
                        "relevance": gt.relevance,
                    }
                    for gt in entry.moments
                ],
            }
            for entry in annotations
        ]
    }
    json.dump(doc, sink, indent=2)
    sink.write("\n")
