"""Corpus storage and pull-request acquisition from a GitHub-style REST API.

Corpus files hold one JSON object per line::

    {"schema_version":1,"library":{"name":..,"dependents":..},
     "pr":{"id":..,"title":..,"body":..,"outcome":"merged"|"closed"|"opened",
           "created_at":..|null,"files":[{"path":..,"patch":..}]}}

A library without pull requests is stored as one line with ``"pr":null``
so that it still counts towards its tier. ``snapshot_at`` lives in a
``<corpus>.meta.json`` sidecar.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import re
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterator, Optional

import httpx

from tailguard.diff import MalformedHunkHeader, file_change, render_hunks
from tailguard.model import (
    Corpus,
    LibraryRecord,
    Outcome,
    PullRequest,
    validate_pull_request,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TOKEN_ENV = "TAILGUARD_TOKEN"
DEFAULT_API = "https://api.github.com"
REPO_RE = re.compile(r"^[A-Za-z0-9_.-]+/[A-Za-z0-9_.-]+$")


class CorpusError(Exception):
    pass


class FileMissing(CorpusError):
    pass


class SchemaVersionUnsupported(CorpusError):
    pass


class FirstInvalidRecord(CorpusError):
    pass


class IoFailure(CorpusError):
    pass


@dataclass(frozen=True)
class LoadError:
    line_no: int
    message: str


@dataclass
class LoadResult:
    corpus: Corpus
    errors: list[LoadError] = field(default_factory=list)


# --- records -----------------------------------------------------------------


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def pr_to_record(lib: LibraryRecord, pr: Optional[PullRequest]) -> dict:
    library = {"name": lib.name, "dependents": lib.dependents}
    if pr is None:
        return {"schema_version": SCHEMA_VERSION, "library": library, "pr": None}
    files = [
        {"path": fc.path, "patch": fc.patch if fc.patch is not None else render_hunks(fc.hunks)}
        for fc in pr.files
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "library": library,
        "pr": {
            "id": pr.id,
            "title": pr.title,
            "body": pr.body,
            "outcome": pr.outcome.value,
            "created_at": pr.created_at,
            "files": files,
        },
    }


def _require(obj, key, types, where):
    if not isinstance(obj, dict) or key not in obj:
        raise ValueError(f"{where}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, types) or (isinstance(value, bool) and types is int):
        raise ValueError(f"{where}: field {key!r} has wrong type")
    return value


def record_to_pr(record: dict) -> tuple[str, int, Optional[PullRequest]]:
    """Decode one corpus line. Raises ValueError on schema problems."""
    if not isinstance(record, dict):
        raise ValueError("record is not a JSON object")
    version = _require(record, "schema_version", int, "record")
    if version != SCHEMA_VERSION:
        raise SchemaVersionUnsupported(f"schema_version {version!r} is not supported")
    lib = _require(record, "library", dict, "record")
    name = _require(lib, "name", str, "library")
    dependents = _require(lib, "dependents", int, "library")
    if dependents < 0:
        raise ValueError("library: negative dependents")
    if "pr" not in record:
        raise ValueError("record: missing field 'pr'")
    raw = record["pr"]
    if raw is None:
        return name, dependents, None
    pr_id = _require(raw, "id", str, "pr")
    title = _require(raw, "title", str, "pr")
    body = _require(raw, "body", str, "pr")
    try:
        outcome = Outcome(_require(raw, "outcome", str, "pr"))
    except ValueError:
        raise ValueError(f"pr: unknown outcome {raw['outcome']!r}") from None
    created_at = raw.get("created_at")
    if created_at is not None and not isinstance(created_at, str):
        raise ValueError("pr: field 'created_at' has wrong type")
    files = []
    for f in _require(raw, "files", list, "pr"):
        path = _require(f, "path", str, "file")
        patch = _require(f, "patch", str, "file")
        try:
            files.append(file_change(path, patch))
        except MalformedHunkHeader as exc:
            raise ValueError(f"file {path}: {exc}") from None
    pr = PullRequest(pr_id, name, title, body, outcome, tuple(files), created_at)
    problems = validate_pull_request(pr)
    if problems:
        raise ValueError("; ".join(problems))
    return name, dependents, pr


def load_corpus(path, strict: bool = False) -> LoadResult:
    path = Path(path)
    if not path.is_file():
        raise FileMissing(f"corpus file not found: {path}")
    libs: dict[str, tuple[int, dict[str, PullRequest]]] = {}
    errors: list[LoadError] = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                name, dependents, pr = record_to_pr(record)
                deps, prs = libs.setdefault(name, (dependents, {}))
                if deps != dependents:
                    raise ValueError(f"library {name}: dependents {dependents} conflicts with {deps}")
                if pr is not None:
                    if pr.id in prs:
                        raise ValueError(f"duplicate pull request {name}#{pr.id}")
                    prs[pr.id] = pr
            except SchemaVersionUnsupported:
                raise
            except ValueError as exc:
                if strict:
                    raise FirstInvalidRecord(f"line {line_no}: {exc}") from exc
                errors.append(LoadError(line_no, str(exc)))
    snapshot_at = None
    meta = _meta_path(path)
    if meta.is_file():
        snapshot_at = json.loads(meta.read_text(encoding="utf-8")).get("snapshot_at")
    corpus = Corpus(
        tuple(LibraryRecord(n, d, tuple(prs.values())) for n, (d, prs) in libs.items()),
        snapshot_at,
    )
    if errors:
        log.warning("%s: skipped %d invalid record(s)", path, len(errors))
    return LoadResult(corpus, errors)


def dump_lines(corpus: Corpus) -> Iterator[str]:
    for lib in corpus.libraries:
        if not lib.pulls:
            yield json.dumps(pr_to_record(lib, None), ensure_ascii=False, separators=(",", ":"))
        for pr in lib.pulls:
            yield json.dumps(pr_to_record(lib, pr), ensure_ascii=False, separators=(",", ":"))


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def save_corpus(corpus: Corpus, path) -> None:
    """Write ``corpus`` sorted by library then PR id; readers never see a partial file."""
    path = Path(path)
    text = "".join(line + "\n" for line in dump_lines(corpus))
    try:
        _atomic_write(path, text)
        meta = _meta_path(path)
        if corpus.snapshot_at is not None:
            _atomic_write(meta, json.dumps({"snapshot_at": corpus.snapshot_at}) + "\n")
        elif meta.exists():
            meta.unlink()
    except OSError as exc:
        raise IoFailure(f"cannot write corpus {path}: {exc}") from exc


def merge_corpora(base: Corpus, extra: Corpus) -> Corpus:
    """Union of two corpora; records in ``extra`` win on (library, PR id) clashes."""
    libs = {lib.name: lib for lib in base.libraries}
    for lib in extra.libraries:
        old = libs.get(lib.name)
        if old is None:
            libs[lib.name] = lib
            continue
        prs = {pr.id: pr for pr in old.pulls}
        prs.update({pr.id: pr for pr in lib.pulls})
        libs[lib.name] = LibraryRecord(lib.name, lib.dependents, tuple(prs.values()))
    return Corpus(tuple(libs.values()), extra.snapshot_at or base.snapshot_at)


# --- dependents population -------------------------------------------------


@dataclass(frozen=True)
class Population:
    dependents: dict[str, int]
    source: str
    sha256: str


def load_population_csv(path) -> Population:
    """Read a CSV with ``name`` and ``dependents`` columns (any extra columns ignored)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FileMissing(f"tiers CSV not found: {path}") from exc
    reader = csv.DictReader(raw.decode("utf-8-sig").splitlines())
    cols = {c.strip().lower(): c for c in (reader.fieldnames or [])}
    if "name" not in cols or "dependents" not in cols:
        raise ValueError(f"{path}: expected 'name' and 'dependents' columns")
    out: dict[str, int] = {}
    for row_no, row in enumerate(reader, start=2):
        try:
            out[row[cols["name"]].strip()] = int(row[cols["dependents"]])
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{row_no}: bad dependents value") from exc
    return Population(out, str(path), hashlib.sha256(raw).hexdigest())


# --- forge client ------------------------------------------------------------


class FetchError(Exception):
    pass


class AuthFailure(FetchError):
    pass


class RepoNotFound(FetchError):
    pass


class TransportError(FetchError):
    pass


class RateLimited(FetchError):
    def __init__(self, message: str, reset_at: Optional[datetime] = None):
        super().__init__(message)
        self.reset_at = reset_at


@dataclass(frozen=True)
class FetchPolicy:
    max_in_flight: int = 4
    retry_budget: int = 3
    backoff_initial: float = 1.0
    backoff_multiplier: float = 2.0
    since: Optional[datetime] = None
    page_size: int = 100

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.retry_budget < 0:
            raise ValueError("retry_budget must be >= 0")
        if not 1 <= self.page_size <= 100:
            raise ValueError("page_size must be within 1..100")


@dataclass(frozen=True)
class PageEvent:
    repo: str
    kind: str  # "pulls" or "files"
    page: int
    items: int


def _parse_time(value: Optional[str]) -> Optional[datetime]:
    if not value:
        return None
    return datetime.fromisoformat(value.replace("Z", "+00:00"))


def outcome_from_api(item: dict) -> Outcome:
    if item.get("state") == "open":
        return Outcome.OPENED
    if item.get("merged_at") or item.get("merged"):
        return Outcome.MERGED
    return Outcome.CLOSED


def _is_rate_limited(resp: httpx.Response) -> bool:
    if resp.status_code == 429:
        return True
    if resp.status_code != 403:
        return False
    if resp.headers.get("x-ratelimit-remaining") == "0" or "retry-after" in resp.headers:
        return True
    return "rate limit" in resp.text.lower()


def _reset_time(resp: httpx.Response) -> Optional[datetime]:
    reset = resp.headers.get("x-ratelimit-reset")
    if reset and reset.isdigit():
        return datetime.fromtimestamp(int(reset), tz=timezone.utc)
    retry_after = resp.headers.get("retry-after")
    if retry_after and retry_after.isdigit():
        return datetime.fromtimestamp(time.time() + int(retry_after), tz=timezone.utc)
    return None


class ForgeClient:
    """Paginated, rate-limit aware reader of pull requests and their patches."""

    def __init__(
        self,
        token: Optional[str] = None,
        policy: FetchPolicy = FetchPolicy(),
        base_url: str = DEFAULT_API,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
        on_progress: Optional[Callable[[PageEvent], None]] = None,
    ):
        headers = {
            "Accept": "application/vnd.github+json",
            "User-Agent": "tailguard",
        }
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self.policy = policy
        self.sleep = sleep
        self.on_progress = on_progress
        self._http = httpx.Client(
            base_url=base_url, headers=headers, transport=transport, timeout=30.0,
        )

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _get(self, url: str, params: Optional[dict] = None, repo: str = "") -> httpx.Response:
        delay = self.policy.backoff_initial
        attempt = 0
        while True:
            try:
                resp = self._http.get(url, params=params)
            except httpx.TransportError as exc:
                if attempt >= self.policy.retry_budget:
                    raise TransportError(f"{url}: {exc}") from exc
            else:
                if resp.status_code == 200:
                    return resp
                if _is_rate_limited(resp):
                    if attempt >= self.policy.retry_budget:
                        raise RateLimited(f"{url}: rate limited", _reset_time(resp))
                elif resp.status_code == 401 or resp.status_code == 403:
                    raise AuthFailure(f"{url}: HTTP {resp.status_code}")
                elif resp.status_code == 404:
                    raise RepoNotFound(f"{repo or url}: not found")
                elif resp.status_code < 500 or attempt >= self.policy.retry_budget:
                    raise TransportError(f"{url}: HTTP {resp.status_code}")
            attempt += 1
            log.info("retrying %s in %.1fs (attempt %d)", url, delay, attempt + 1)
            self.sleep(delay)
            delay *= self.policy.backoff_multiplier

    def _pages(self, url: str, params: dict, repo: str, kind: str) -> Iterator[list]:
        page = params.get("page", 1)
        next_url: Optional[str] = url
        next_params: Optional[dict] = params
        while next_url:
            resp = self._get(next_url, next_params, repo)
            items = resp.json()
            if not isinstance(items, list):
                raise TransportError(f"{next_url}: expected a JSON list")
            event = PageEvent(repo, kind, page, len(items))
            log.debug("%s %s page %d: %d items", repo, kind, page, len(items))
            if self.on_progress:
                self.on_progress(event)
            yield items
            nxt = resp.links.get("next", {}).get("url")
            if nxt:
                next_url, next_params = nxt, None
            elif len(items) == params.get("per_page"):
                # no Link header: keep walking numbered pages
                next_url, next_params = url, {**params, "page": page + 1}
            else:
                next_url = None
            page += 1

    def _files(self, repo: str, number: int) -> tuple:
        files = []
        for items in self._pages(
            f"/repos/{repo}/pulls/{number}/files",
            {"per_page": self.policy.page_size, "page": 1}, repo, "files",
        ):
            for f in items:
                try:
                    files.append(file_change(f["filename"], f.get("patch") or ""))
                except MalformedHunkHeader as exc:
                    # keep the file so kind-based rules still see it
                    log.warning("%s#%d %s: unparseable patch dropped (%s)", repo, number, f["filename"], exc)
                    files.append(file_change(f["filename"], ""))
        return tuple(files)

    def fetch_repo_pull_requests(self, repo: str) -> Iterator[PullRequest]:
        if not REPO_RE.match(repo):
            raise ValueError(f"not an owner/name repository id: {repo!r}")
        params = {
            "state": "all", "sort": "created", "direction": "desc",
            "per_page": self.policy.page_size, "page": 1,
        }
        since = self.policy.since
        with ThreadPoolExecutor(max_workers=self.policy.max_in_flight) as pool:
            for items in self._pages(f"/repos/{repo}/pulls", params, repo, "pulls"):
                if since is not None:
                    kept = [it for it in items if (_parse_time(it.get("created_at")) or since) >= since]
                    stop = len(kept) < len(items)
                    items = kept
                else:
                    stop = False
                file_lists = pool.map(lambda it: self._files(repo, it["number"]), items)
                for item, files in zip(items, file_lists):
                    yield PullRequest(
                        id=f"{repo}#{item['number']}",
                        repo=repo,
                        title=item.get("title") or "",
                        body=item.get("body") or "",
                        outcome=outcome_from_api(item),
                        files=files,
                        created_at=item.get("created_at"),
                    )
                if stop:
                    return


def fetch_repo_pull_requests(
    repo: str, token: Optional[str] = None, policy: FetchPolicy = FetchPolicy(), **kwargs
) -> Iterator[PullRequest]:
    with ForgeClient(token, policy, **kwargs) as client:
        yield from client.fetch_repo_pull_requests(repo)


def resolve_token(flag: Optional[str]) -> Optional[str]:
    return flag or os.environ.get(TOKEN_ENV) or None
