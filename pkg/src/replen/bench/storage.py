import threading
import typing as t
from functools import reduce
from operator import getitem


class Storage:
    """
    Storage is the place bench steps share values through. Everything in it is
    available to templated step fields:
    - `storage.params.*` for the suite parameters (after the environment merge).
    - `storage.entries.<name>.*` for the results of entries that already ran.
    E.g:
    ```
    {{ storage.params.data_dir }}/instances/sdp_example.json
    ```
    Entries running on worker threads read it through `snapshot()`; writes hold a lock.
    """

    def __init__(self, params: t.Optional[t.Mapping[str, t.Any]] = None) -> None:
        self.storage: t.Dict[str, t.Any] = {"params": dict(params or {}), "entries": {}}
        self.lock = threading.Lock()

    def __getitem__(self, key: str):
        """
        Lookup a value given its key and return None if not found
        """
        return self.storage.get(key)

    def __setitem__(self, key: str, value: t.Any):
        with self.lock:
            if "." in key:
                self.update_nested_item(key.split("."), value)
            else:
                self.storage[key] = value

    def __contains__(self, key: str):
        return key in self.storage

    def as_dict(self) -> t.Dict[str, t.Any]:
        return self.storage

    def snapshot(self) -> t.Dict[str, t.Any]:
        """A copy of the top two levels, safe to render templates from while entries finish"""
        with self.lock:
            return {
                key: dict(value) if isinstance(value, dict) else value
                for key, value in self.storage.items()
            }

    def update_nested_item(self, path: t.Sequence[str], value: t.Any) -> None:
        """Update item in nested dictionary"""
        reduce(getitem, path[:-1], self.storage)[path[-1]] = value
