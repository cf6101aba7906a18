"""Keyword classifiers for MRI sequence and body location.

Both classifiers are total: any text produces a label, ``unknown`` or an
exclusion being ordinary outcomes. Matching is token based on lowercase text
split at non-alphanumerics, so "cor" never counts as a contrast marker.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

SEQUENCE_BASES = (
    "t1", "t2", "pd", "stir", "tirm", "dixon-t1", "dixon",
    "vibe-group", "se-group", "mra", "unknown",
)
PHASES = ("none", "water", "fat", "in-phase", "out-phase")

LOCATIONS = (
    "chest", "abdomen", "thoracic-spine", "lumbar-spine", "shoulder",
    "humerus", "hip", "thigh", "knee", "lower-leg", "misc",
)
EXCLUSION_REASONS = ("head-face", "multi-area", "unrecognized")

_EXCLUDE_TOKENS = ("diffusion", "dwi", "adc", "localizer", "loc", "scout", "mpr", "mrcp", "twist")
_VIBE = {"vibe", "lava", "grasp", "thrive"}
_SPIN_ECHO = {"se", "fse", "tse", "haste", "ssfse"}
_WEIGHTING = re.compile(r"^(t1|t2|pd)w?(fs)?$")


def tokenize(text: str) -> list[str]:
    return [t for t in re.split(r"[^a-z0-9]+", (text or "").lower()) if t]


def _has_phrase(tokens: list[str], phrase: str) -> bool:
    words = phrase.split()
    n = len(words)
    return any(tokens[i:i + n] == words for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class SequenceLabel:
    base: str = "unknown"
    fat_sat: bool = False
    phase: str = "none"
    contrast: bool = False
    excluded: bool = False
    reason: Optional[str] = None

    @property
    def key(self) -> str:
        """Reporting name: base, then fs, then phase, then a ``+c`` suffix."""
        parts = [self.base]
        if self.fat_sat:
            parts.append("fs")
        if self.phase != "none":
            parts.append(self.phase)
        return " ".join(parts) + ("+c" if self.contrast else "")

    def to_dict(self) -> dict:
        return {
            "base": self.base,
            "fat_sat": self.fat_sat,
            "phase": self.phase,
            "contrast": self.contrast,
            "excluded": self.excluded,
            "reason": self.reason,
            "key": self.key,
        }


def _sequence_base(tokens: list[str]) -> str:
    weights = set()
    for t in tokens:
        m = _WEIGHTING.match(t)
        if m:
            weights.add(m.group(1))
    toks = set(tokens)
    if "mra" in toks:
        return "mra"
    if "dixon" in toks:
        return "dixon-t1" if "t1" in weights else "dixon"
    if toks & _VIBE:
        return "vibe-group"
    if "stir" in toks:
        return "stir"
    if "tirm" in toks:
        return "tirm"
    if "haste" in toks or "ssfse" in toks:
        return "se-group"
    for w in ("t1", "t2", "pd"):
        if w in weights:
            return w
    if toks & _SPIN_ECHO:
        return "se-group"
    return "unknown"


def _phase(tokens: list[str]) -> str:
    dixon = "dixon" in tokens
    if _has_phrase(tokens, "in phase") or "inphase" in tokens or dixon and ("in" in tokens or "ip" in tokens):
        return "in-phase"
    if (_has_phrase(tokens, "out phase") or _has_phrase(tokens, "out of phase") or "outphase" in tokens
            or dixon and ("opp" in tokens or "op" in tokens)):
        return "out-phase"
    if "water" in tokens or dixon and "w" in tokens:
        return "water"
    for i, t in enumerate(tokens):
        if t == "fat":
            nxt = tokens[i + 1] if i + 1 < len(tokens) else ""
            if nxt not in ("sat", "saturated", "suppressed", "supp"):
                return "fat"
    if dixon and "f" in tokens:
        return "fat"
    return "none"


def _fat_sat(tokens: list[str]) -> bool:
    if _has_phrase(tokens, "no fs") or _has_phrase(tokens, "non fs"):
        return False
    if any(_WEIGHTING.match(t) and t.endswith("fs") for t in tokens):
        return True
    return ("fs" in tokens or "fatsat" in tokens or _has_phrase(tokens, "fat sat")
            or _has_phrase(tokens, "fat saturated"))


def classify_sequence(series_description: str) -> SequenceLabel:
    text = (series_description or "").lower()
    tokens = tokenize(text)
    excluded_by = next((t for t in _EXCLUDE_TOKENS if t in tokens), None)
    contrast = "c" in tokens or re.search(r"(^|[^a-z0-9])\+c($|[^a-z0-9])", text) is not None
    return SequenceLabel(
        base=_sequence_base(tokens),
        fat_sat=_fat_sat(tokens),
        phase=_phase(tokens),
        contrast=contrast,
        excluded=excluded_by is not None,
        reason=excluded_by,
    )


@dataclass(frozen=True)
class BodyLocation:
    category: Optional[str] = None
    reason: Optional[str] = None

    @property
    def excluded(self) -> bool:
        return self.category is None

    def to_dict(self) -> dict:
        return {"category": self.category, "excluded": self.excluded, "reason": self.reason}


_HEAD_FACE = (
    "brain", "cervical", "c spine", "cspine", "neck", "face", "facial",
    "orbit", "orbits", "sinus", "sinuses", "pituitary", "iac", "tmj",
)
_MULTI_AREA = (
    "whole body", "entire", "total spine", "whole spine", "complete spine",
    "arms", "legs", "extremities", "bilateral lower extremities",
)
# longest phrases are matched first and consume their words
_LOCATION_WORDS = {
    "thoracic spine": "thoracic-spine", "t spine": "thoracic-spine", "tspine": "thoracic-spine",
    "lumbar spine": "lumbar-spine", "l spine": "lumbar-spine", "lspine": "lumbar-spine",
    "lumbar": "lumbar-spine", "lumbosacral": "lumbar-spine", "sacrum": "lumbar-spine",
    "lower leg": "lower-leg", "tib fib": "lower-leg", "tibia": "lower-leg", "fibula": "lower-leg",
    "calf": "lower-leg",
    "upper arm": "humerus", "humerus": "humerus",
    "chest": "chest", "thorax": "chest", "thoracic": "chest", "breast": "chest", "sternum": "chest",
    "abdomen": "abdomen", "abdominal": "abdomen", "abd": "abdomen", "liver": "abdomen",
    "pancreas": "abdomen", "kidney": "abdomen", "kidneys": "abdomen", "renal": "abdomen",
    "mrcp": "abdomen", "enterography": "abdomen",
    "shoulder": "shoulder", "scapula": "shoulder",
    "hip": "hip", "hips": "hip", "pelvis": "hip", "pelvic": "hip",
    "thigh": "thigh", "femur": "thigh",
    "knee": "knee",
    "hand": "misc", "wrist": "misc", "finger": "misc", "thumb": "misc", "foot": "misc",
    "ankle": "misc", "toe": "misc", "forefoot": "misc", "elbow": "misc", "forearm": "misc",
}
_PHRASES = sorted(_LOCATION_WORDS, key=lambda p: (-len(p.split()), p))


def classify_body_location(protocol_description: str) -> BodyLocation:
    tokens = tokenize(protocol_description)
    if any(_has_phrase(tokens, p) for p in _HEAD_FACE):
        return BodyLocation(None, "head-face")
    if any(_has_phrase(tokens, p) for p in _MULTI_AREA):
        return BodyLocation(None, "multi-area")
    remaining = list(tokens)
    found = set()
    for phrase in _PHRASES:
        words = phrase.split()
        n = len(words)
        i = 0
        while i <= len(remaining) - n:
            if remaining[i:i + n] == words:
                found.add(_LOCATION_WORDS[phrase])
                remaining[i:i + n] = ["\0"]
            i += 1
    # abdomen/pelvis exams are routine single-region abdominal studies
    if found == {"abdomen", "hip"} and ("pelvis" in tokens or "pelvic" in tokens):
        found = {"abdomen"}
    if not found:
        return BodyLocation(None, "unrecognized")
    if len(found) > 1:
        return BodyLocation(None, "multi-area")
    return BodyLocation(found.pop(), None)
