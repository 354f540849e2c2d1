"""Compiled binary codec for schema'd events.

Encoding rules, little-endian throughout:

    f64 -> 8-byte IEEE-754    f32 -> 4-byte IEEE-754
    i64 -> 8-byte signed      i32 -> 4-byte signed      bool -> 1 byte (0/1)
    record -> fields back-to-back in schema order
    array  -> u32 element count, then elements back-to-back

The codec is compiled once per schema. Runs of fixed-width fields collapse
into single struct calls, and arrays of fixed-width elements decode through
one `iter_unpack` per array, which keeps pure-Python decoding fast enough
for multi-hundred-MB files.

f32 values are rounded to single precision on write; round trips are exact
only for values already representable in f32.
"""

from __future__ import annotations

import struct
from struct import Struct
from typing import Callable

from ..errors import SchemaViolation, TruncatedBlock
from ..schema import Array, Primitive, Record, Schema, SchemaNode

_FMT = {"f64": "d", "f32": "f", "i64": "q", "i32": "i", "bool": "?"}
_U32 = Struct("<I")


def _fixed_info(node: SchemaNode):
    """For subtrees without arrays: (fmt, flatten(value, out), assemble(vals, i)).

    `flatten` appends the value's scalars to `out` in schema order;
    `assemble` rebuilds the value from a flat tuple starting at index `i`
    and returns (value, next index).
    """
    if isinstance(node, Primitive):
        fmt = _FMT[node.kind]

        def flatten(v, out):
            out.append(v)

        def assemble(vals, i):
            return vals[i], i + 1

        return fmt, flatten, assemble
    if isinstance(node, Record):
        parts = []
        fmt = ""
        for name, child in node.fields:
            info = _fixed_info(child)
            if info is None:
                return None
            cfmt, cflat, casm = info
            fmt += cfmt
            parts.append((name, cflat, casm))
        if all(isinstance(child, Primitive) for _, child in node.fields):
            names = node.names()
            width = len(names)

            def flatten(v, out, ns=names):
                for n in ns:
                    out.append(v[n])

            def assemble(vals, i, ns=names, w=width):
                return dict(zip(ns, vals[i:i + w])), i + w

            return fmt, flatten, assemble

        parts = tuple(parts)

        def flatten(v, out, ps=parts):
            for name, cflat, _ in ps:
                cflat(v[name], out)

        def assemble(vals, i, ps=parts):
            d = {}
            for name, _, casm in ps:
                d[name], i = casm(vals, i)
            return d, i

        return fmt, flatten, assemble
    return None


def _compile(node: SchemaNode):
    """Return (encode(buf, value), decode(mv, off) -> (value, off))."""
    info = _fixed_info(node)
    if info is not None:
        fmt, flatten, assemble = info
        stru = Struct("<" + fmt)
        size = stru.size

        def enc(buf, v, s=stru, fl=flatten):
            out = []
            fl(v, out)
            buf += s.pack(*out)

        def dec(mv, off, s=stru, asm=assemble, sz=size):
            vals = s.unpack_from(mv, off)
            value, _ = asm(vals, 0)
            return value, off + sz

        return enc, dec

    if isinstance(node, Array):
        elem_info = _fixed_info(node.element)
        if elem_info is not None and Struct("<" + elem_info[0]).size == 0:
            # zero-width element (records with no scalar fields): only the
            # count carries information
            easm = elem_info[2]

            def enc(buf, v):
                buf += _U32.pack(len(v))

            def dec(mv, off, asm=easm):
                (n,) = _U32.unpack_from(mv, off)
                return [asm((), 0)[0] for _ in range(n)], off + 4

            return enc, dec
        if elem_info is not None:
            efmt, eflat, easm = elem_info
            estru = Struct("<" + efmt)
            esize = estru.size
            packs: dict[int, Struct] = {}
            elem = node.element

            def enc(buf, v, fl=eflat, fmt=efmt, cache=packs):
                n = len(v)
                buf += _U32.pack(n)
                if n:
                    out = []
                    for item in v:
                        fl(item, out)
                    s = cache.get(n)
                    if s is None:
                        s = cache[n] = Struct("<" + fmt * n)
                    buf += s.pack(*out)

            if isinstance(elem, Record) and all(isinstance(c, Primitive) for _, c in elem.fields):
                names = elem.names()

                def dec(mv, off, s=estru, sz=esize, ns=names):
                    (n,) = _U32.unpack_from(mv, off)
                    off += 4
                    end = off + n * sz
                    items = [dict(zip(ns, t)) for t in s.iter_unpack(mv[off:end])]
                    return items, end
            elif isinstance(elem, Primitive):
                def dec(mv, off, s=estru, sz=esize):
                    (n,) = _U32.unpack_from(mv, off)
                    off += 4
                    end = off + n * sz
                    items = [t[0] for t in s.iter_unpack(mv[off:end])]
                    return items, end
            else:
                def dec(mv, off, s=estru, sz=esize, asm=easm):
                    (n,) = _U32.unpack_from(mv, off)
                    off += 4
                    end = off + n * sz
                    items = [asm(t, 0)[0] for t in s.iter_unpack(mv[off:end])]
                    return items, end

            return enc, dec

        eenc, edec = _compile(node.element)

        def enc(buf, v, e=eenc):
            buf += _U32.pack(len(v))
            for item in v:
                e(buf, item)

        def dec(mv, off, e=edec):
            (n,) = _U32.unpack_from(mv, off)
            off += 4
            items = []
            for _ in range(n):
                item, off = e(mv, off)
                items.append(item)
            return items, off

        return enc, dec

    # record containing at least one array: encode/decode stepwise, folding
    # consecutive fixed fields into one struct
    assert isinstance(node, Record)
    enc_steps: list[Callable] = []
    dec_steps: list[Callable] = []
    pending: list[tuple[str, SchemaNode]] = []

    def flush_pending():
        if not pending:
            return
        info = _fixed_info(Record(tuple(pending)))
        assert info is not None
        fmt, flatten, assemble = info
        stru = Struct("<" + fmt)
        size = stru.size

        def enc_step(buf, v, s=stru, fl=flatten):
            out = []
            fl(v, out)
            buf += s.pack(*out)

        def dec_step(d, mv, off, s=stru, asm=assemble, sz=size):
            vals = s.unpack_from(mv, off)
            sub, _ = asm(vals, 0)
            d.update(sub)
            return off + sz

        enc_steps.append(enc_step)
        dec_steps.append(dec_step)
        pending.clear()

    for name, child in node.fields:
        if _fixed_info(child) is not None:
            pending.append((name, child))
            continue
        flush_pending()
        cenc, cdec = _compile(child)

        def enc_step(buf, v, n=name, e=cenc):
            e(buf, v[n])

        def dec_step(d, mv, off, n=name, e=cdec):
            d[n], off = e(mv, off)
            return off

        enc_steps.append(enc_step)
        dec_steps.append(dec_step)
    flush_pending()

    enc_steps_t = tuple(enc_steps)
    dec_steps_t = tuple(dec_steps)

    def enc(buf, v, steps=enc_steps_t):
        for step in steps:
            step(buf, v)

    def dec(mv, off, steps=dec_steps_t):
        d: dict = {}
        for step in steps:
            off = step(d, mv, off)
        return d, off

    return enc, dec


class EventCodec:
    """Encoder/decoder for events of one schema."""

    def __init__(self, schema: Schema):
        self.schema = schema
        self._enc, self._dec = _compile(schema.root)

    def encode(self, event: dict) -> bytes:
        buf = bytearray()
        self.encode_into(buf, event)
        return bytes(buf)

    def encode_into(self, buf: bytearray, event: dict) -> None:
        try:
            self._enc(buf, event)
        except (KeyError, TypeError, ValueError, OverflowError, struct.error) as exc:
            raise SchemaViolation(f"event does not conform to schema: {exc!r}") from exc

    def decode_block(self, payload, count: int) -> list[dict]:
        """Decode `count` events packed back-to-back; the payload must be
        consumed exactly."""
        mv = memoryview(payload)
        dec = self._dec
        off = 0
        events = []
        try:
            for _ in range(count):
                event, off = dec(mv, off)
                events.append(event)
        except Exception as exc:  # struct errors on malformed payloads
            raise TruncatedBlock(f"event data overruns block payload: {exc}") from exc
        if off != len(mv):
            raise TruncatedBlock(
                f"block payload has {len(mv) - off} undecoded trailing bytes"
            )
        return events
