"""On-disk formats: Netpbm masks and maps, feature grids, proposal manifests."""

import json
import os
import struct

import numpy as np

from .masks import as_features, as_mask, as_probmap

PGM_MAXVAL = 65535
FEAT_MAGIC = b"SGVF"
FEAT_VERSION = 1


class FormatError(ValueError):
    """Malformed file; ``offset`` is the byte position where parsing failed."""

    def __init__(self, msg, offset=None, path=None):
        self.offset = offset
        self.path = path
        where = f" at byte offset {offset}" if offset is not None else ""
        src = f"{path}: " if path else ""
        super().__init__(f"{src}{msg}{where}")


def frame_name(index, ext):
    return f"{index:05d}.{ext}"


# ---------------------------------------------------------------------------
# Netpbm
# ---------------------------------------------------------------------------

_WS = b" \t\n\r\v\f"


def _header(data, magic, nfields):
    if len(data) < 2 or data[:2] != magic:
        raise FormatError(f"expected magic {magic.decode()}", 0)
    pos = 2
    fields = []
    while len(fields) < nfields:
        if pos >= len(data):
            raise FormatError("truncated header", pos)
        c = data[pos:pos + 1]
        if c in (b"",) or c[0] in _WS:
            pos += 1
            continue
        if c == b"#":
            while pos < len(data) and data[pos] not in b"\n\r":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in _WS and data[pos:pos + 1] != b"#":
            pos += 1
        tok = data[start:pos]
        if not tok.isdigit():
            raise FormatError(f"bad header token {tok!r}", start)
        fields.append(int(tok))
    if pos >= len(data) or data[pos] not in _WS:
        raise FormatError("missing whitespace after header", pos)
    return fields, pos + 1


def parse_pbm(data, path=None):
    try:
        (w, h), pos = _header(data, b"P4", 2)
    except FormatError as exc:
        exc.path = path
        raise
    if w < 1 or h < 1:
        raise FormatError(f"invalid dimensions {w}x{h}", 2, path)
    stride = (w + 7) // 8
    need = stride * h
    if len(data) - pos < need:
        raise FormatError(f"raster truncated: need {need} bytes, have {len(data) - pos}", len(data), path)
    raster = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(h, stride)
    # PBM: 1 = black = foreground.
    return np.unpackbits(raster, axis=1)[:, :w].astype(bool)


def format_pbm(m):
    m = as_mask(m)
    h, w = m.shape
    return b"P4\n%d %d\n" % (w, h) + np.packbits(m, axis=1).tobytes()


def parse_pgm(data, path=None):
    try:
        (w, h, maxval), pos = _header(data, b"P5", 3)
    except FormatError as exc:
        exc.path = path
        raise
    if w < 1 or h < 1:
        raise FormatError(f"invalid dimensions {w}x{h}", 2, path)
    if not 1 <= maxval <= 65535:
        raise FormatError(f"maxval {maxval} outside 1..65535", pos - 1, path)
    nbytes = 2 if maxval > 255 else 1
    need = w * h * nbytes
    if len(data) - pos < need:
        raise FormatError(f"raster truncated: need {need} bytes, have {len(data) - pos}", len(data), path)
    dtype = ">u2" if nbytes == 2 else "u1"
    samples = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    bad = np.flatnonzero(samples > maxval)
    if bad.size:
        raise FormatError(f"sample {int(samples.flat[bad[0]])} exceeds maxval {maxval}", pos + int(bad[0]) * nbytes, path)
    return samples.astype(np.float64) / maxval


def format_pgm(p):
    p = as_probmap(p)
    h, w = p.shape
    q = np.rint(p * PGM_MAXVAL).astype(">u2")
    return b"P5\n%d %d\n%d\n" % (w, h, PGM_MAXVAL) + q.tobytes()


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _write(path, data):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(data)


def load_mask(path):
    return parse_pbm(_read(path), path)


def save_mask(path, m):
    _write(path, format_pbm(m))


def load_probmap(path):
    return parse_pgm(_read(path), path)


def save_probmap(path, p):
    _write(path, format_pgm(p))


# ---------------------------------------------------------------------------
# feature grids: "SGVF", u32 version, u32 height, u32 width, u32 dim, f64 LE values
# ---------------------------------------------------------------------------

_FEAT_HEAD = struct.Struct("<4sIIII")


def format_features(f):
    f = as_features(f)
    h, w, d = f.shape
    return _FEAT_HEAD.pack(FEAT_MAGIC, FEAT_VERSION, h, w, d) + np.ascontiguousarray(f, dtype="<f8").tobytes()


def parse_features(data, path=None):
    if len(data) < _FEAT_HEAD.size:
        raise FormatError("truncated feature header", len(data), path)
    magic, version, h, w, d = _FEAT_HEAD.unpack_from(data)
    if magic != FEAT_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0, path)
    if version != FEAT_VERSION:
        raise FormatError(f"unsupported feature format version {version}", 4, path)
    if min(h, w, d) < 1:
        raise FormatError(f"invalid feature dimensions {h}x{w}x{d}", 8, path)
    need = h * w * d * 8
    if len(data) - _FEAT_HEAD.size != need:
        raise FormatError(f"payload is {len(data) - _FEAT_HEAD.size} bytes, expected {need}", len(data), path)
    f = np.frombuffer(data, dtype="<f8", offset=_FEAT_HEAD.size).reshape(h, w, d).astype(np.float64)
    if not np.all(np.isfinite(f)):
        bad = int(np.flatnonzero(~np.isfinite(f))[0])
        raise FormatError("non-finite feature value", _FEAT_HEAD.size + 8 * bad, path)
    return f


def load_features(path):
    return parse_features(_read(path), path)


def save_features(path, f):
    _write(path, format_features(f))


# ---------------------------------------------------------------------------
# proposal manifests
# ---------------------------------------------------------------------------


def load_proposals(path):
    """Read a per-frame manifest into a list of :class:`~sgvos.prior.InstanceProposal`.

    ``mask_path`` entries are resolved relative to the manifest's directory.
    """
    from .prior import InstanceProposal

    with open(path) as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for i, obj in enumerate(doc.get("objects", [])):
        try:
            mask = load_mask(os.path.join(base, obj["mask_path"]))
            out.append(InstanceProposal(mask, obj["category"], float(obj["confidence"]),
                                        instance_id=obj.get("instance_id")))
        except KeyError as exc:
            raise FormatError(f"object {i} lacks field {exc}", path=path) from None
    return out


def save_proposals(path, proposals, mask_dir="masks"):
    """Write proposals as a manifest plus one PBM per object under ``mask_dir``."""
    base = os.path.dirname(os.path.abspath(path))
    stem = os.path.splitext(os.path.basename(path))[0]
    objects = []
    for k, prop in enumerate(proposals):
        rel = f"{mask_dir}/{stem}_{k:02d}.pbm"
        save_mask(os.path.join(base, rel), prop.mask)
        obj = {"mask_path": rel, "category": prop.category, "confidence": prop.confidence}
        if prop.instance_id is not None:
            obj["instance_id"] = prop.instance_id
        objects.append(obj)
    _write(path, (json.dumps({"objects": objects}, indent=1) + "\n").encode())
