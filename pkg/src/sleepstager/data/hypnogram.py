"""Hypnogram ingestion: stage-label mapping and annotation expansion.

Accepts EDF+ annotation streams (TALs) or a CSV of
``onset_s,duration_s,stage_string`` rows. Both R&K (stages 1-4) and AASM
(N1-N3) vocabularies map onto the five-class scheme; legacy stages 3 and 4
merge into N3, and movement/unknown epochs are marked EXCLUDED so they
never reach training or metrics.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .. import EXCLUDED, STAGE_TO_INDEX
from ..errors import AnnotationError
from .edf import parse_edf

log = logging.getLogger(__name__)

EPOCH_S = 30.0

_STAGE_ALIASES = {
    "W": "W",
    "WAKE": "W",
    "0": "W",
    "1": "N1",
    "N1": "N1",
    "2": "N2",
    "N2": "N2",
    "3": "N3",
    "N3": "N3",
    "4": "N3",  # legacy R&K stage 4 folds into N3
    "N4": "N3",
    "R": "REM",
    "REM": "REM",
}

_EXCLUDED_FORMS = {"M", "MOVEMENT", "MOVEMENT TIME", "?", "UNKNOWN", "UNSCORED"}


def map_stage_label(raw):
    """Map a free-form stage string to a stage index or ``EXCLUDED``.

    Total: every string maps somewhere; unrecognized labels are excluded
    (and logged) rather than rejected.
    """
    text = str(raw).strip().upper()
    if text.startswith("SLEEP STAGE"):
        text = text[len("SLEEP STAGE"):].strip()
    if text in _STAGE_ALIASES:
        return STAGE_TO_INDEX[_STAGE_ALIASES[text]]
    if text not in _EXCLUDED_FORMS:
        log.info("unrecognized stage label %r treated as excluded", raw)
    return EXCLUDED


def _is_stage_annotation(text):
    t = str(text).strip().upper()
    return t.startswith("SLEEP STAGE") or t in _EXCLUDED_FORMS or t in _STAGE_ALIASES


@dataclass
class Hypnogram:
    """Per-epoch stage labels; EXCLUDED entries mark dropped epochs."""

    labels: np.ndarray  # int8, values 0..4 or EXCLUDED
    epoch_s: float = EPOCH_S

    def __len__(self):
        return len(self.labels)

    def scored_count(self):
        return int(np.sum(self.labels != EXCLUDED))


def hypnogram_from_annotations(annotations):
    """Expand ``(onset_s, duration_s, stage_string)`` rows into epoch labels."""
    rows = []
    for onset, duration, text in annotations:
        onset = float(onset)
        duration = float(duration)
        if onset < 0:
            raise AnnotationError(f"negative onset {onset}")
        if duration <= 0:
            raise AnnotationError(f"non-positive duration {duration} at {onset}s")
        if abs(onset % EPOCH_S) > 1e-9 and abs(onset % EPOCH_S - EPOCH_S) > 1e-9:
            raise AnnotationError(f"onset {onset}s not aligned to the 30 s grid")
        if abs(duration % EPOCH_S) > 1e-9 and abs(duration % EPOCH_S - EPOCH_S) > 1e-9:
            raise AnnotationError(f"duration {duration}s at {onset}s not a multiple of 30 s")
        rows.append((onset, duration, text))
    rows.sort(key=lambda r: r[0])
    for (o1, d1, _), (o2, _, _) in zip(rows, rows[1:]):
        if o2 < o1 + d1 - 1e-9:
            raise AnnotationError(
                f"annotations overlap: [{o1}, {o1 + d1}) and onset {o2}"
            )
    if not rows:
        return Hypnogram(np.empty(0, dtype=np.int8))
    end = rows[-1][0] + rows[-1][1]
    n = int(round(end / EPOCH_S))
    labels = np.full(n, EXCLUDED, dtype=np.int8)
    for onset, duration, text in rows:
        stage = map_stage_label(text)
        first = int(round(onset / EPOCH_S))
        count = int(round(duration / EPOCH_S))
        labels[first : first + count] = stage
    return Hypnogram(labels)


def parse_tals(raw):
    """Split an EDF+ annotation byte stream into (onset, duration, text) rows.

    Each TAL is ``<onset>[\\x15<duration>]\\x14<text>\\x14...\\x14\\x00``;
    time-keeping TALs (empty text) are skipped.
    """
    rows = []
    for chunk in raw.split(b"\x00"):
        if not chunk or b"\x14" not in chunk:
            continue
        head, *texts = chunk.split(b"\x14")
        if b"\x15" in head:
            onset_b, duration_b = head.split(b"\x15", 1)
        else:
            onset_b, duration_b = head, b"0"
        try:
            onset = float(onset_b.decode("ascii"))
            duration = float(duration_b.decode("ascii"))
        except (UnicodeDecodeError, ValueError) as e:
            raise AnnotationError(f"malformed TAL header {head!r}") from e
        for t in texts:
            text = t.decode("utf-8", errors="replace").strip()
            if text:
                rows.append((onset, duration, text))
    return rows


def parse_hypnogram_edf(data):
    """Hypnogram from an EDF+ file's annotation channel (bytes or parsed)."""
    rec = parse_edf(data) if isinstance(data, (bytes, bytearray)) else data
    if not rec.annotation_bytes:
        raise AnnotationError("recording has no EDF Annotations channel")
    rows = [r for r in parse_tals(rec.annotation_bytes) if _is_stage_annotation(r[2])]
    if not rows:
        raise AnnotationError("annotation stream holds no stage annotations")
    return hypnogram_from_annotations(rows)


def parse_hypnogram_csv(text):
    """Hypnogram from ``onset_s,duration_s,stage`` CSV text (header optional)."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",", 2)]
        if len(parts) != 3:
            raise AnnotationError(f"line {lineno}: expected 3 columns, got {line!r}")
        try:
            onset = float(parts[0])
            duration = float(parts[1])
        except ValueError:
            if lineno == 1:
                continue  # header row
            raise AnnotationError(f"line {lineno}: non-numeric onset/duration")
        rows.append((onset, duration, parts[2]))
    if not rows:
        raise AnnotationError("CSV holds no annotations")
    return hypnogram_from_annotations(rows)


def parse_hypnogram(source, fmt=None):
    """Dispatch on source: path/bytes of an EDF+ file, or CSV path/text."""
    if isinstance(source, (bytes, bytearray)):
        return parse_hypnogram_edf(bytes(source))
    path = str(source)
    if fmt is None:
        fmt = "csv" if path.lower().endswith(".csv") else "edfplus"
    if fmt == "csv":
        with open(path, "r", encoding="utf-8") as f:
            return parse_hypnogram_csv(f.read())
    if fmt == "edfplus":
        with open(path, "rb") as f:
            return parse_hypnogram_edf(f.read())
    raise AnnotationError(f"unknown hypnogram format {fmt!r}")
