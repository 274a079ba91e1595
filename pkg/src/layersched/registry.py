"""Docker-Registry-v2 metadata client and the image/layer metadata cache.

The cache file is JSON keyed by ``name:tag``; per-image records use the
exact field names ``id``, ``name``, ``name_without_repo``, ``tag``,
``total_size`` and ``l_meta`` (with ``size`` and ``layer`` per layer) so the
file interoperates with other tooling that reads the same schema. Only
metadata moves over the wire; blobs are never downloaded.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import (
    CacheCorrupt,
    DigestSizeConflict,
    RegistryProtocolError,
    RegistryUnavailable,
    UnknownImage,
    UnsupportedManifest,
)
from .model import ImageRef, LayerCatalog

MANIFEST_V2 = "application/vnd.docker.distribution.manifest.v2+json"
MANIFEST_LIST_V2 = "application/vnd.docker.distribution.manifest.list.v2+json"
OCI_MANIFEST = "application/vnd.oci.image.manifest.v1+json"
OCI_INDEX = "application/vnd.oci.image.index.v1+json"
ACCEPT_MANIFESTS = ", ".join([MANIFEST_V2, OCI_MANIFEST, MANIFEST_LIST_V2, OCI_INDEX])

_HOST_COMPONENT = re.compile(r"[.:]|^localhost$")


@dataclass
class LayerMetadata:
    size: int
    layer: str  # digest

    def __post_init__(self):
        if self.size < 0:
            raise ValueError("layer size must be >= 0")
        if not self.layer:
            raise ValueError("layer digest must be non-empty")

    def to_json_dict(self) -> dict:
        return {"size": self.size, "layer": self.layer}

    @classmethod
    def from_json_dict(cls, data: dict) -> "LayerMetadata":
        return cls(size=int(data["size"]), layer=str(data["layer"]))


@dataclass
class ImageMetadata:
    id: str
    name: str
    name_without_repo: str
    tag: str
    total_size: int
    l_meta: list[LayerMetadata] = field(default_factory=list)

    def __post_init__(self):
        layer_sum = sum(layer.size for layer in self.l_meta)
        if self.total_size != layer_sum:
            raise ValueError(
                f"total_size {self.total_size} != sum of layer sizes {layer_sum}"
            )

    @property
    def key(self) -> str:
        return f"{self.name}:{self.tag}"

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "name_without_repo": self.name_without_repo,
            "tag": self.tag,
            "total_size": self.total_size,
            "l_meta": [layer.to_json_dict() for layer in self.l_meta],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ImageMetadata":
        return cls(
            id=str(data["id"]),
            name=str(data["name"]),
            name_without_repo=str(data["name_without_repo"]),
            tag=str(data["tag"]),
            total_size=int(data["total_size"]),
            l_meta=[LayerMetadata.from_json_dict(entry) for entry in data["l_meta"]],
        )


@dataclass
class ImageMetadataLists:
    """A snapshot of the whole registry's image metadata, keyed ``name:tag``.

    ``catch_file``, ``stale`` and ``warnings`` are runtime bookkeeping and
    never serialized; equality is over ``lists`` alone.
    """

    catch_file: str = field(default="", compare=False)
    lists: dict[str, ImageMetadata] = field(default_factory=dict)
    stale: bool = field(default=False, compare=False)
    warnings: list[str] = field(default_factory=list, compare=False)

    def __post_init__(self):
        for key, image in self.lists.items():
            if key != image.key:
                raise ValueError(f"cache key {key!r} != image key {image.key!r}")


@dataclass
class RegistryConfig:
    base_url: str
    poll_interval: float = 10.0
    cache_path: str = "cache.json"
    token: str | None = None
    username: str | None = None
    password: str | None = None

    def __post_init__(self):
        if self.poll_interval <= 0:
            raise ValueError("poll_interval must be > 0")
        self.base_url = self.base_url.rstrip("/")


def strip_repo_host(name: str) -> str:
    """Drop a leading registry-host component (contains ``.``/``:`` or is
    ``localhost``) from an image name; plain repo paths pass through."""
    head, sep, rest = name.partition("/")
    if sep and _HOST_COMPONENT.search(head):
        return rest
    return name


class RegistryClient:
    """Thin HTTP client for the v2 catalog, tags, and manifest endpoints."""

    def __init__(self, config: RegistryConfig, session: requests.Session | None = None):
        self.config = config
        self.session = session or requests.Session()
        if config.token:
            self.session.headers["Authorization"] = f"Bearer {config.token}"
        elif config.username is not None:
            self.session.auth = (config.username, config.password or "")

    def _get(self, path: str, headers: dict | None = None) -> requests.Response:
        url = path if path.startswith("http") else f"{self.config.base_url}{path}"
        try:
            response = self.session.get(url, headers=headers, timeout=30)
        except requests.RequestException as exc:
            raise RegistryUnavailable(f"GET {url}: {exc}") from exc
        return response

    def _get_paginated(self, path: str, list_key: str) -> list[str]:
        items: list[str] = []
        url = path
        while True:
            response = self._get(url)
            if response.status_code != 200:
                raise RegistryProtocolError(response.status_code, f"GET {url}")
            body = response.json()
            items.extend(body.get(list_key) or [])
            link = response.links.get("next")
            if not link:
                return items
            url = link["url"]

    def fetch_catalog(self) -> list[str]:
        """All repository names, following pagination Link headers."""
        return self._get_paginated("/v2/_catalog", "repositories")

    def fetch_tags(self, name: str) -> list[str]:
        return self._get_paginated(f"/v2/{name}/tags/list", "tags")

    def fetch_image_metadata(self, name: str, tag: str) -> ImageMetadata:
        """Resolve the image's v2 manifest into layer digests and sizes.

        Manifest lists (multi-arch) resolve through their first platform
        entry. The record id is the manifest's config digest.
        """
        manifest = self._fetch_manifest(name, tag)
        media_type = manifest.get("mediaType", "")
        if media_type in (MANIFEST_LIST_V2, OCI_INDEX):
            entries = manifest.get("manifests") or []
            if not entries:
                raise UnsupportedManifest(f"{name}:{tag}: empty manifest list")
            manifest = self._fetch_manifest(name, entries[0]["digest"])
            media_type = manifest.get("mediaType", "")
        if manifest.get("schemaVersion") != 2 or media_type not in (MANIFEST_V2, OCI_MANIFEST):
            raise UnsupportedManifest(
                f"{name}:{tag}: schemaVersion={manifest.get('schemaVersion')} "
                f"mediaType={media_type!r}"
            )
        layers = [
            LayerMetadata(size=int(entry["size"]), layer=str(entry["digest"]))
            for entry in manifest.get("layers", [])
        ]
        return ImageMetadata(
            id=str(manifest.get("config", {}).get("digest", "")),
            name=name,
            name_without_repo=strip_repo_host(name),
            tag=tag,
            total_size=sum(layer.size for layer in layers),
            l_meta=layers,
        )

    def _fetch_manifest(self, name: str, reference: str) -> dict:
        response = self._get(
            f"/v2/{name}/manifests/{reference}",
            headers={"Accept": ACCEPT_MANIFESTS},
        )
        if response.status_code == 404:
            raise UnknownImage(f"{name}:{reference} not in registry")
        if response.status_code != 200:
            raise RegistryProtocolError(response.status_code, f"manifest {name}:{reference}")
        return response.json()


def save_cache(lists: ImageMetadataLists, path: str | Path) -> None:
    """Write the cache atomically (temp file + rename), keys sorted."""
    path = Path(path)
    payload = {key: lists.lists[key].to_json_dict() for key in sorted(lists.lists)}
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_cache(path: str | Path) -> ImageMetadataLists:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(payload, dict):
            raise CacheCorrupt(f"{path}: top level must be an object")
        lists = {
            key: ImageMetadata.from_json_dict(entry) for key, entry in payload.items()
        }
    except CacheCorrupt:
        raise
    except (json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        raise CacheCorrupt(f"{path}: {exc}") from exc
    return ImageMetadataLists(catch_file=str(path), lists=lists)


def lookup(lists: ImageMetadataLists, name: str, tag: str) -> ImageMetadata:
    try:
        return lists.lists[f"{name}:{tag}"]
    except KeyError:
        raise UnknownImage(f"{name}:{tag} not in cache") from None


def refresh_cache(config: RegistryConfig, client: RegistryClient | None = None) -> ImageMetadataLists:
    """Walk catalog -> tags -> manifests and rewrite the cache file.

    Images that fail to resolve become warnings; the rest are kept. If the
    registry is unreachable outright, a prior cache is returned flagged
    stale instead of being destroyed; with no prior cache the outage is
    raised.
    """
    client = client or RegistryClient(config)
    cache_path = Path(config.cache_path)
    try:
        repositories = client.fetch_catalog()
    except RegistryUnavailable:
        if cache_path.exists():
            snapshot = load_cache(cache_path)
            snapshot.stale = True
            snapshot.warnings.append(f"registry {config.base_url} unreachable; serving prior cache")
            return snapshot
        raise

    lists: dict[str, ImageMetadata] = {}
    warnings: list[str] = []
    for name in repositories:
        try:
            tags = client.fetch_tags(name)
        except (RegistryUnavailable, RegistryProtocolError, UnknownImage) as exc:
            warnings.append(f"tags for {name}: {exc}")
            continue
        for tag in tags:
            try:
                image = client.fetch_image_metadata(name, tag)
            except (RegistryUnavailable, RegistryProtocolError, UnknownImage, UnsupportedManifest) as exc:
                warnings.append(f"manifest {name}:{tag}: {exc}")
                continue
            lists[image.key] = image

    if not lists and warnings and cache_path.exists():
        # Nothing resolved at all: keep the previous snapshot.
        snapshot = load_cache(cache_path)
        snapshot.stale = True
        snapshot.warnings.extend(warnings)
        return snapshot

    snapshot = ImageMetadataLists(catch_file=str(cache_path), lists=lists, warnings=warnings)
    save_cache(snapshot, cache_path)
    return snapshot


def catalog_from_cache(lists: ImageMetadataLists) -> LayerCatalog:
    """Bridge cached metadata into the scheduling model.

    Identical digests across images collapse into a single catalog layer;
    that collapse is exactly what layer sharing exploits. Zero-byte layers
    are dropped: they add nothing to download cost, storage, or sharing.
    """
    sizes_seen: dict[str, int] = {}
    layers: dict[str, int] = {}
    images: dict[ImageRef, tuple[str, ...]] = {}
    for key in sorted(lists.lists):
        image = lists.lists[key]
        stack = []
        for layer in image.l_meta:
            known = sizes_seen.get(layer.layer)
            if known is not None and known != layer.size:
                raise DigestSizeConflict(
                    f"layer {layer.layer} reported as {known} and {layer.size} bytes"
                )
            sizes_seen[layer.layer] = layer.size
            if layer.size == 0:
                continue
            layers[layer.layer] = layer.size
            stack.append(layer.layer)
        images[ImageRef(image.name, image.tag)] = tuple(stack)
    return LayerCatalog(layers=layers, images=images)


class RegistryWatcher:
    """Background refresher; readers always see a complete snapshot.

    The snapshot reference is swapped whole after each refresh, so handles
    returned by :meth:`snapshot` are safe to keep and share across threads.
    """

    def __init__(self, config: RegistryConfig, client: RegistryClient | None = None):
        self.config = config
        self.client = client or RegistryClient(config)
        self._snapshot: ImageMetadataLists | None = None
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def refresh_once(self) -> ImageMetadataLists:
        snapshot = refresh_cache(self.config, self.client)
        self._snapshot = snapshot
        return snapshot

    def snapshot(self) -> ImageMetadataLists | None:
        return self._snapshot

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def _loop(self) -> None:
        while not self._stop.is_set():
            try:
                self.refresh_once()
            except RegistryUnavailable:
                pass  # retry on the next tick
            self._stop.wait(self.config.poll_interval)

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
