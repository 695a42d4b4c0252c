"""Museum record ingestion: JSON parsing, text normalisation, canonical keys.

The accepted record shape mirrors collection-management exports. Each object
carries ``opacObjectFieldSets`` (named groups of field values), an optional
``relationshipsCollection`` (typed links to people, organisations and other
objects) and an optional ``imagesCollection``. Unknown top-level keys are
ignored. Containers may be a single object, a JSON array, NDJSON, or any
concatenation of those.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterator

from .errors import MuseKGError

DEFAULT_ATTRIBUTE_KEYS: tuple[str, ...] = (
    "name",
    "material_desc",
    "description",
    "accession_no",
    "measurements",
    "credit_line",
    "production_date",
    "object_type",
    "history_category",
)

# ASCII punctuation plus the curly quote characters that show up in catalogue
# prose. Stripped characters are replaced by a space, never just deleted, so
# "WPA,Ltd" normalises to "wpa ltd" rather than "wpaltd".
PUNCTUATION: str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~" + "“”‘’"

_PUNCT_RE = re.compile("[" + re.escape(PUNCTUATION) + "]")
_WS_RE = re.compile(r"\s+")
_DECODER = json.JSONDecoder()


class RecordParseError(MuseKGError):
    """Raised when the input byte stream is not syntactically valid."""

    def __init__(self, message: str, byte_offset: int) -> None:
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class NoCanonicalKeyError(MuseKGError):
    """Raised when neither a title nor an accession number is available."""


def normalize_text(s: str) -> str:
    """Lower-case ``s``, strip punctuation and quotes, collapse whitespace.

    Idempotent by construction; applies no transliteration beyond case
    folding.
    """
    return _WS_RE.sub(" ", _PUNCT_RE.sub(" ", s.lower())).strip()


@dataclass
class RelationshipRef:
    """One typed link from a record to related records."""

    relationship_id: str
    related_record_type: str
    related_records: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.relationship_id:
            raise ValueError("relationship_id must be non-empty")
        for rr_id, _title in self.related_records:
            if not rr_id:
                raise ValueError("related_record_id must be non-empty")


@dataclass
class Record:
    """A parsed museum object record, preserving source field order."""

    object_id: str
    field_sets: list[tuple[str, list[str]]] = field(default_factory=list)
    relationships: list[RelationshipRef] = field(default_factory=list)
    image_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.object_id:
            raise ValueError("object_id must be non-empty")
        for ident, _values in self.field_sets:
            if not ident:
                raise ValueError("field-set identifier must be non-empty")

    def first_value(self, identifier: str) -> str | None:
        """Return the first value of the first field set named ``identifier``."""
        wanted = identifier.lower()
        for ident, values in self.field_sets:
            if ident.lower() == wanted and values:
                return values[0]
        return None


@dataclass
class RecordReject:
    """A record-shaped entry that could not be ingested."""

    object_index: int
    reason: str

    def to_dict(self) -> dict[str, Any]:
        return {"object_index": self.object_index, "reason": self.reason}


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered, closed set of attribute keys a node may carry."""

    keys: tuple[str, ...] = DEFAULT_ATTRIBUTE_KEYS

    def __post_init__(self) -> None:
        object.__setattr__(self, "keys", tuple(self.keys))
        seen: set[str] = set()
        for key in self.keys:
            if not key or key != key.lower():
                raise ValueError(f"schema key {key!r} must be non-empty and lower-case")
            if key in seen:
                raise ValueError(f"duplicate schema key {key!r}")
            seen.add(key)
        object.__setattr__(self, "_order", {k: i for i, k in enumerate(self.keys)})

    def __contains__(self, key: object) -> bool:
        return key in self._order  # type: ignore[attr-defined]

    def __iter__(self) -> Iterator[str]:
        return iter(self.keys)

    def index(self, key: str) -> int:
        return self._order[key]  # type: ignore[attr-defined]


def canonical_key(source: Any) -> str:
    """Deduplication identity for a record or node.

    Prefers the accession number (``accno:<normalised>`` with internal
    whitespace removed, accession numbers being identifiers rather than
    prose), else the title (``title:<normalised>``).
    """
    attrs = getattr(source, "attributes", None)
    if attrs is not None:
        title = attrs.get("name")
        accession = attrs.get("accession_no")
    elif hasattr(source, "field_sets"):
        title = source.first_value("name")
        accession = source.first_value("accession_no")
    else:
        raise TypeError(f"cannot derive a canonical key from {type(source).__name__}")
    if accession:
        acc_norm = normalize_text(accession).replace(" ", "")
        if acc_norm:
            return f"accno:{acc_norm}"
    if title:
        title_norm = normalize_text(title)
        if title_norm:
            return f"title:{title_norm}"
    raise NoCanonicalKeyError("source has neither an accession number nor a title")


def iter_json_values(text: str) -> Iterator[tuple[Any, int]]:
    """Yield ``(value, char_offset)`` for each top-level JSON value in ``text``.

    Handles a single value, NDJSON, and arbitrary concatenations of values, so
    parsing the concatenation of two valid files yields the union of their
    values.
    """
    pos = 0
    size = len(text)
    while True:
        while pos < size and text[pos] in " \t\r\n":
            pos += 1
        if pos >= size:
            return
        value, end = _DECODER.raw_decode(text, pos)
        yield value, pos
        pos = end


def _byte_offset(text: str, char_pos: int) -> int:
    return len(text[:char_pos].encode("utf-8"))


def _coerce_value(value: Any) -> str | None:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return str(value)
    return None


def _coerce_id(value: Any) -> str | None:
    if isinstance(value, str) and value.strip():
        return value.strip()
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    return None


def _aslist(value: Any) -> list[Any]:
    return value if isinstance(value, list) else []


def _record_from_json(obj: dict[str, Any]) -> tuple[Record | None, str | None]:
    object_id = _coerce_id(obj.get("opacObjectId"))
    if object_id is None:
        return None, "missing opacObjectId"

    field_sets: list[tuple[str, list[str]]] = []
    for fs in _aslist(obj.get("opacObjectFieldSets")):
        if not isinstance(fs, dict):
            continue
        ident = fs.get("identifier")
        if not isinstance(ident, str) or not ident.strip():
            continue
        values: list[str] = []
        for f in _aslist(fs.get("opacObjectFields")):
            if isinstance(f, dict):
                coerced = _coerce_value(f.get("value"))
                if coerced is not None:
                    values.append(coerced)
        field_sets.append((ident.strip(), values))

    relationships: list[RelationshipRef] = []
    rc = obj.get("relationshipsCollection")
    for rel in _aslist(rc.get("relationships") if isinstance(rc, dict) else None):
        if not isinstance(rel, dict):
            continue
        rid = rel.get("relationshipId")
        if not isinstance(rid, str) or not rid.strip():
            continue
        rtype = rel.get("relatedRecordType")
        rtype = rtype.strip() if isinstance(rtype, str) else ""
        related: list[tuple[str, str]] = []
        for rr in _aslist(rel.get("relatedRecords")):
            if not isinstance(rr, dict):
                continue
            rr_id = _coerce_id(rr.get("relatedRecordId"))
            if rr_id is None:
                continue
            title = rr.get("title")
            related.append((rr_id, title if isinstance(title, str) else ""))
        relationships.append(RelationshipRef(rid.strip(), rtype, related))

    image_ids: list[str] = []
    ic = obj.get("imagesCollection")
    for img in _aslist(ic.get("images") if isinstance(ic, dict) else None):
        if isinstance(img, dict):
            iid = _coerce_id(img.get("imageId"))
            if iid is not None:
                image_ids.append(iid)

    return Record(object_id, field_sets, relationships, image_ids), None


def parse_records(
    data: bytes | str, format_hint: str | None = None
) -> tuple[list[Record], list[RecordReject]]:
    """Parse a byte stream of records.

    Syntactic failures raise :class:`RecordParseError` with a byte offset;
    semantic failures (non-object entries, missing ``opacObjectId``) land in
    the rejects list and parsing continues.
    """
    if format_hint not in (None, "auto", "json", "ndjson"):
        raise ValueError(f"unknown format hint {format_hint!r}")
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise RecordParseError("input is not valid UTF-8", exc.start) from exc
    else:
        text = data

    records: list[Record] = []
    rejects: list[RecordReject] = []
    index = 0
    values = iter_json_values(text)
    while True:
        try:
            value, _pos = next(values)
        except StopIteration:
            break
        except json.JSONDecodeError as exc:
            raise RecordParseError(exc.msg, _byte_offset(text, exc.pos)) from exc
        for obj in value if isinstance(value, list) else [value]:
            if not isinstance(obj, dict):
                rejects.append(RecordReject(index, "entry is not a JSON object"))
            else:
                record, reason = _record_from_json(obj)
                if record is None:
                    rejects.append(RecordReject(index, reason or "unreadable record"))
                else:
                    records.append(record)
            index += 1
    return records, rejects


def record_to_json(record: Record) -> dict[str, Any]:
    """Serialise a record back to the source JSON shape."""
    payload: dict[str, Any] = {"opacObjectId": record.object_id}
    if record.field_sets:
        payload["opacObjectFieldSets"] = [
            {
                "identifier": ident,
                "opacObjectFields": [{"value": v} for v in values],
            }
            for ident, values in record.field_sets
        ]
    if record.relationships:
        payload["relationshipsCollection"] = {
            "relationships": [
                {
                    "relationshipId": rel.relationship_id,
                    "relatedRecordType": rel.related_record_type,
                    "relatedRecords": [
                        {"relatedRecordId": rr_id, "title": title}
                        for rr_id, title in rel.related_records
                    ],
                }
                for rel in record.relationships
            ]
        }
    if record.image_ids:
        payload["imagesCollection"] = {
            "images": [{"imageId": iid} for iid in record.image_ids]
        }
    return payload
