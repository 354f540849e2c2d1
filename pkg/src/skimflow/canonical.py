"""Canonical JSON encoding shared by file headers and report emitters.

Canonical form: compact separators, no key sorting (construction order is
the declared order), UTF-8 without ASCII escaping, and no NaN/Infinity.
Identical objects always serialize to identical bytes.
"""

from __future__ import annotations

import json


def dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def dump_bytes(obj) -> bytes:
    return dumps(obj).encode("utf-8")
