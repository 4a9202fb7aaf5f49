"""Plain-text extraction from fetched documents.

Embedded text only, no OCR.  Handles PDFs with literal/hex show-text
operators (optionally Flate-compressed streams), word-processor files
with the standard zipped-XML layout, and plain text as a development
convenience.  Deliberately small: good enough for machine-generated and
conventionally typeset documents, not a general PDF renderer.
"""

from __future__ import annotations

import base64
import re
import zipfile
import zlib
from io import BytesIO
from pathlib import Path
from xml.etree import ElementTree

MIN_WORDS = 500  # below this a "paper" is likely a stub or a scrape artifact

_STREAM = re.compile(rb"stream\r?\n(.*?)\r?\n?endstream", re.DOTALL)
_LITERAL_TJ = re.compile(rb"\(((?:\\.|[^\\()])*)\)\s*Tj")
_HEX_TJ = re.compile(rb"<([0-9A-Fa-f\s]+)>\s*Tj")
_ARRAY_TJ = re.compile(rb"\[(.*?)\]\s*TJ", re.DOTALL)
_LITERAL = re.compile(rb"\(((?:\\.|[^\\()])*)\)")
_OCTAL = re.compile(rb"\\([0-7]{1,3})")


class ExtractionError(RuntimeError):
    pass


def sniff_format(data: bytes) -> str | None:
    """Identify a fetched payload: 'pdf', 'docx', or None for anything else."""
    if data.startswith(b"%PDF-"):
        return "pdf"
    if data.startswith(b"PK\x03\x04"):
        try:
            with zipfile.ZipFile(BytesIO(data)) as zf:
                if "word/document.xml" in zf.namelist():
                    return "docx"
        except zipfile.BadZipFile:
            return None
    return None


def _decode_pdf_string(raw: bytes) -> str:
    out = bytearray()
    i = 0
    while i < len(raw):
        byte = raw[i]
        if byte == 0x5C and i + 1 < len(raw):  # backslash escape
            nxt = raw[i + 1]
            octal = _OCTAL.match(raw, i)
            if octal:
                out.append(int(octal.group(1), 8) & 0xFF)
                i = octal.end()
                continue
            mapped = {0x6E: 0x0A, 0x72: 0x0D, 0x74: 0x09, 0x62: 0x08, 0x66: 0x0C}
            out.append(mapped.get(nxt, nxt))
            i += 2
            continue
        out.append(byte)
        i += 1
    return out.decode("latin-1")


def _pdf_content_text(content: bytes) -> list[str]:
    pieces: list[str] = []
    for match in _LITERAL_TJ.finditer(content):
        pieces.append(_decode_pdf_string(match.group(1)))
    for match in _HEX_TJ.finditer(content):
        digits = re.sub(rb"\s", b"", match.group(1))
        if len(digits) % 2:
            digits += b"0"
        pieces.append(bytes.fromhex(digits.decode("ascii")).decode("latin-1"))
    for match in _ARRAY_TJ.finditer(content):
        for literal in _LITERAL.finditer(match.group(1)):
            pieces.append(_decode_pdf_string(literal.group(1)))
    return pieces


def extract_pdf(data: bytes) -> str:
    if not data.startswith(b"%PDF-"):
        raise ExtractionError("not a PDF payload")
    pieces: list[str] = []
    for match in _STREAM.finditer(data):
        pieces.extend(_pdf_content_text(_decode_stream(match.group(1))))
    return " ".join(piece.strip() for piece in pieces if piece.strip())


def _decode_stream(body: bytes) -> bytes:
    # Filters are guessed rather than read from the object dictionary:
    # plain, Flate, and ASCII85-wrapped Flate cover the documents this
    # pipeline stores.
    trimmed = body.strip()
    if trimmed.endswith(b"~>"):
        try:
            trimmed = base64.a85decode(trimmed[:-2].translate(None, b" \t\r\n"))
        except ValueError:
            return body
    try:
        return zlib.decompress(trimmed)
    except zlib.error:
        return body


def extract_docx(data: bytes) -> str:
    try:
        with zipfile.ZipFile(BytesIO(data)) as zf:
            xml = zf.read("word/document.xml")
    except (zipfile.BadZipFile, KeyError) as exc:
        raise ExtractionError(f"not a readable word-processor file: {exc}") from exc
    root = ElementTree.fromstring(xml)
    paragraphs: list[str] = []
    for para in root.iter():
        if not para.tag.endswith("}p"):
            continue
        runs = [node.text for node in para.iter() if node.tag.endswith("}t") and node.text]
        if runs:
            paragraphs.append("".join(runs))
    return "\n".join(paragraphs)


def extract_text(path: str | Path) -> str:
    """Pull the embedded text out of a stored document, by sniffed format."""
    path = Path(path)
    data = path.read_bytes()
    kind = sniff_format(data)
    if kind == "pdf":
        return extract_pdf(data)
    if kind == "docx":
        return extract_docx(data)
    if path.suffix.lower() in (".txt", ".text"):
        return data.decode("utf-8", errors="replace")
    raise ExtractionError(f"unsupported document format: {path.name}")


def extract_document(path: str | Path, min_words: int = MIN_WORDS) -> str:
    """Extract and apply the short-document guard.

    Feeding a scorer an empty or near-empty body invites an invented
    review of a paper that was never read, so anything under min_words
    is rejected outright.
    """
    text = extract_text(path)
    words = len(text.split())
    if words < min_words:
        raise ExtractionError(
            f"{Path(path).name}: only {words} extractable words, need {min_words}"
        )
    return text
