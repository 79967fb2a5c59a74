"""
Preset catalog backend.

Reference experiments live in ``presets.json`` next to this module; values in
the file are ordinary frequencies (Hz) unless a ``*_units`` key says otherwise.
"""

import json
import os
import threading
from typing import Dict, List, Optional

from srmaser.errors import UnknownPresetError


class PresetBackend:
    """Base class for preset backends."""

    def get_presets(self) -> List[Dict]:
        """Get every preset record."""
        raise NotImplementedError

    def get_preset(self, name: str) -> Dict:
        """Get one preset record by name."""
        raise NotImplementedError

    def get_defaults(self) -> Dict:
        """Get catalog-wide defaults applied to every record."""
        raise NotImplementedError

    def get_stats(self) -> Dict:
        """Get catalog statistics."""
        raise NotImplementedError


class JSONPresetBackend(PresetBackend):
    """Read-only JSON file backend."""

    def __init__(self, path: Optional[str] = None):
        if path is None:
            path = os.path.join(os.path.dirname(__file__), 'presets.json')
        self.path = path
        self._data: Optional[Dict] = None
        self._lock = threading.Lock()

    def _load_data(self) -> Dict:
        with self._lock:
            if self._data is None:
                with open(self.path, 'r', encoding='utf-8') as f:
                    self._data = json.load(f)
            return self._data

    def get_presets(self) -> List[Dict]:
        return list(self._load_data()['presets'])

    def get_preset(self, name: str) -> Dict:
        key = name.strip().lower()
        for record in self._load_data()['presets']:
            if record['name'] == key:
                return record
        known = ", ".join(self.names())
        raise UnknownPresetError(f"unknown preset '{name}' (known: {known})")

    def get_defaults(self) -> Dict:
        return dict(self._load_data().get('defaults', {}))

    def names(self) -> List[str]:
        return [record['name'] for record in self._load_data()['presets']]

    @property
    def units(self) -> str:
        return self._load_data().get('units', 'hertz')

    def get_stats(self) -> Dict:
        presets = self._load_data()['presets']
        regimes: Dict[str, int] = {}
        for record in presets:
            label = record.get('reported_regime', 'unknown')
            regimes[label] = regimes.get(label, 0) + 1
        return {
            'total_presets': len(presets),
            'regimes': regimes,
            'path': self.path,
        }


_backend: Optional[PresetBackend] = None


def get_backend(path: Optional[str] = None) -> PresetBackend:
    """Get the process-wide preset backend (or a fresh one for an explicit path)."""
    global _backend
    if path is not None:
        return JSONPresetBackend(path)
    if _backend is None:
        _backend = JSONPresetBackend()
    return _backend
