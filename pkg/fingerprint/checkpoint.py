"""
Checkpoint container.

A checkpoint is a numpy ``.npz`` archive. The entry ``__config__`` holds the
JSON-encoded ``AttEncConfig`` fields, ``__metadata__`` holds JSON run
metadata (class ids, held-out drivers, seed), and every other entry is one
parameter array stored under its dotted name with its own shape and dtype
(float64). Loading a saved checkpoint reproduces every array bit-exactly.
"""
import json
import logging
from pathlib import Path

import numpy as np

from .encoder import AttEncConfig, from_state_dict
from .exceptions import DataError

logger = logging.getLogger(__name__)

CONFIG_KEY = '__config__'
METADATA_KEY = '__metadata__'


def save(path, params):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = dict(params.state_dict())
    arrays[CONFIG_KEY] = np.array(json.dumps(params.config.to_dict(), sort_keys=True))
    arrays[METADATA_KEY] = np.array(json.dumps(params.metadata, sort_keys=True))
    with open(path, 'wb') as fh:
        np.savez(fh, **arrays)
    logger.info(f"Saved checkpoint with {len(arrays) - 2} arrays to {path}")
    return path


def load(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            config = AttEncConfig(**json.loads(str(archive[CONFIG_KEY])))
            metadata = json.loads(str(archive[METADATA_KEY]))
            arrays = {name: archive[name] for name in archive.files
                      if name not in (CONFIG_KEY, METADATA_KEY)}
    except (KeyError, ValueError, OSError) as exc:
        raise DataError(f"unreadable checkpoint {path}: {exc}") from exc
    return from_state_dict(config, arrays, metadata=metadata)
