"""
Parameter checkpoints, format "gdck1"

Layout:
    b'gdck1\n'
    8-byte little-endian unsigned header length
    UTF-8 JSON manifest: {"version": "gdck1", "entries": [{name, shape, offset}], "meta": {...}}
    raw little-endian float64 values, entries back to back in manifest order

Entries are written in sorted name order so equal parameters give equal
bytes.
"""

import hashlib
import json
import struct
from typing import Any, Dict, Optional, Tuple

import numpy as np

from guidedplan.errors import GuidedPlanError

MAGIC = b'gdck1\n'
VERSION = 'gdck1'


class CheckpointError(GuidedPlanError):
    pass


def dumps(state: Dict[str, np.ndarray],
          meta: Optional[Dict[str, Any]] = None) -> bytes:
    entries = []
    blobs = []
    offset = 0
    for _name in sorted(state):
        arr = np.ascontiguousarray(state[_name], dtype='<f8').reshape(
            np.shape(state[_name]))
        entries.append({
            'name': _name,
            'shape': list(arr.shape),
            'offset': offset
        })
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({
        'version': VERSION,
        'entries': entries,
        'meta': meta or {}
    },
                        sort_keys=True).encode('utf8')
    return MAGIC + struct.pack('<Q', len(header)) + header + b''.join(blobs)


def loads(data: bytes) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    if not data.startswith(MAGIC):
        raise CheckpointError('not a gdck1 checkpoint')
    start = len(MAGIC)
    (n, ) = struct.unpack('<Q', data[start:start + 8])
    header = json.loads(data[start + 8:start + 8 + n].decode('utf8'))
    if header.get('version') != VERSION:
        raise CheckpointError(f'unsupported version {header.get("version")}')
    body = data[start + 8 + n:]
    state = {}
    for _e in header['entries']:
        count = int(np.prod(_e['shape'])) if _e['shape'] else 1
        arr = np.frombuffer(body, dtype='<f8', count=count, offset=_e['offset'])
        state[_e['name']] = arr.reshape(_e['shape']).astype(np.float64)
    return state, header.get('meta', {})


def save_checkpoint(path: str,
                    state: Dict[str, np.ndarray],
                    meta: Optional[Dict[str, Any]] = None) -> str:
    """ Write <state> to <path> and return the sha256 of the file bytes """

    data = dumps(state, meta)
    with open(path, 'wb') as w:
        w.write(data)
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    with open(path, 'rb') as r:
        return loads(r.read())


def state_hash(state: Dict[str, np.ndarray]) -> str:
    return hashlib.sha256(dumps(state)).hexdigest()
