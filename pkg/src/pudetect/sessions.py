"""Web hit logs -> session feature vectors with heuristic PU tags.

A session is one visitor's run of consecutive hits with every gap under
30 minutes; a gap of 1800 seconds or more starts a new session. Sessions
of visitors who ever purchased are labeled positive (s=1). Sessions from
known cloud/datacenter address ranges get an evaluation-only negative
tag which never enters training.

Input is a tab-separated hit log with a header line:

    visitor_id  timestamp  url  user_agent  ip  purchase_flag

timestamp is epoch seconds, purchase_flag is 0/1. Rows that fail to
parse are skipped and counted, not fatal.
"""

from __future__ import annotations

import ipaddress
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "Hit", "Session", "SessionTable", "SESSION_GAP_SECONDS",
    "FEATURE_COLUMNS", "parse_hits", "sessionize", "classify_user_agent",
    "tag_pu_labels", "write_sessions_tsv", "read_sessions_tsv",
]

log = logging.getLogger(__name__)

SESSION_GAP_SECONDS = 1800.0

HIT_FIELDS = ("visitor_id", "timestamp", "url", "user_agent", "ip",
              "purchase_flag")

FEATURE_COLUMNS = (
    "session_length_seconds", "hit_count", "hits_per_second",
    "mean_gap_seconds", "min_gap_seconds", "unique_url_count",
    "hour_of_day", "ua_browser", "ua_scripted",
)

_SCRIPTED_MARKERS = ("bot", "crawl", "spider", "curl", "wget", "python",
                     "scrapy", "httpclient", "java/", "go-http")


@dataclass(frozen=True)
class Hit:
    visitor_id: str
    timestamp: float
    url: str
    user_agent: str
    ip: str
    purchase_flag: bool

    def __post_init__(self):
        if not self.visitor_id:
            raise ValueError("visitor_id must be non-empty")
        if not np.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")


def classify_user_agent(user_agent: str) -> str:
    """Coarse bucket: browser, scripted, or other."""
    ua = user_agent.lower()
    if any(mark in ua for mark in _SCRIPTED_MARKERS):
        return "scripted"
    if ua.startswith("mozilla"):
        return "browser"
    return "other"


@dataclass
class Session:
    visitor_id: str
    hits: list

    @property
    def start(self) -> float:
        return self.hits[0].timestamp

    @property
    def end(self) -> float:
        return self.hits[-1].timestamp

    @property
    def hit_count(self) -> int:
        return len(self.hits)

    @property
    def ip(self) -> str:
        return self.hits[0].ip

    @property
    def purchased(self) -> bool:
        return any(h.purchase_flag for h in self.hits)

    def feature_vector(self) -> np.ndarray:
        times = [h.timestamp for h in self.hits]
        length = self.end - self.start
        gaps = [b - a for a, b in zip(times, times[1:])]
        mean_gap = float(np.mean(gaps)) if gaps else 0.0
        min_gap = float(min(gaps)) if gaps else 0.0
        hps = self.hit_count / length if length > 0 else 0.0
        urls = len({h.url for h in self.hits})
        hour = float(int(self.start % 86400.0) // 3600)
        ua = classify_user_agent(self.hits[0].user_agent)
        return np.array([
            length, float(self.hit_count), hps, mean_gap, min_gap,
            float(urls), hour,
            1.0 if ua == "browser" else 0.0,
            1.0 if ua == "scripted" else 0.0,
        ], dtype=np.float64)


def parse_hits(path):
    """Read a hit log file; returns (hits, skipped_row_count)."""
    hits = []
    skipped = 0
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != list(HIT_FIELDS):
            raise ConfigError(
                f"hit log header must be {' '.join(HIT_FIELDS)}")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(HIT_FIELDS):
                skipped += 1
                continue
            visitor, ts_raw, url, ua, ip, flag = parts
            try:
                ts = float(ts_raw)
                hit = Hit(visitor, ts, url, ua, ip, flag.strip() == "1")
            except ValueError:
                skipped += 1
                continue
            hits.append(hit)
    return hits, skipped


def sessionize(hits) -> list:
    """Group hits into per-visitor sessions split at gaps >= 30 minutes.

    Hits may arrive in any order; they are sorted per visitor by
    timestamp first. Output is ordered by (visitor_id, start time).
    """
    by_visitor = {}
    for h in hits:
        by_visitor.setdefault(h.visitor_id, []).append(h)

    sessions = []
    for visitor in sorted(by_visitor):
        vhits = sorted(by_visitor[visitor], key=lambda h: h.timestamp)
        current = [vhits[0]]
        for h in vhits[1:]:
            if h.timestamp - current[-1].timestamp >= SESSION_GAP_SECONDS:
                sessions.append(Session(visitor, current))
                current = [h]
            else:
                current.append(h)
        sessions.append(Session(visitor, current))
    return sessions


@dataclass
class SessionTable:
    """Feature rows for a list of sessions plus their PU tags."""

    sessions: list
    features: np.ndarray          # (n, len(FEATURE_COLUMNS))
    s: np.ndarray                 # 1 = known positive (purchaser visitor)
    eval_negative: np.ndarray     # 1 = cloud-range session, evaluation only
    conflicts: int = 0

    @property
    def rows(self) -> int:
        return self.features.shape[0]


def _parse_ranges(cloud_ip_ranges):
    nets = []
    for raw in cloud_ip_ranges:
        raw = raw.strip()
        if not raw or raw.startswith("#"):
            continue
        try:
            nets.append(ipaddress.ip_network(raw, strict=False))
        except ValueError as exc:
            raise ConfigError(f"invalid CIDR range {raw!r}: {exc}") from exc
    return nets


def tag_pu_labels(sessions, purchaser_visitor_ids, cloud_ip_ranges=()) -> SessionTable:
    """Stamp s=1 on purchaser-visitor sessions and an evaluation-only
    negative tag on sessions from cloud address ranges.

    A session matching both resolves to s=1 with a logged warning; the
    negative tag is never used for training either way.
    """
    nets = _parse_ranges(cloud_ip_ranges)
    purchasers = set(purchaser_visitor_ids)

    n = len(sessions)
    features = np.zeros((n, len(FEATURE_COLUMNS)), dtype=np.float64)
    s = np.zeros(n, dtype=np.int8)
    neg = np.zeros(n, dtype=np.int8)
    conflicts = 0
    for i, sess in enumerate(sessions):
        features[i] = sess.feature_vector()
        is_pos = sess.visitor_id in purchasers
        is_neg = False
        if nets:
            try:
                addr = ipaddress.ip_address(sess.ip)
            except ValueError:
                addr = None
            if addr is not None:
                is_neg = any(addr.version == net.version and addr in net
                             for net in nets)
        if is_pos and is_neg:
            conflicts += 1
            log.warning("session of visitor %s is both purchaser and "
                        "cloud-tagged; keeping the positive label",
                        sess.visitor_id)
            is_neg = False
        s[i] = 1 if is_pos else 0
        neg[i] = 1 if is_neg else 0
    return SessionTable(sessions=list(sessions), features=features, s=s,
                        eval_negative=neg, conflicts=conflicts)


def write_sessions_tsv(table: SessionTable, path) -> None:
    header = ["visitor_id", "start", "end"] + list(FEATURE_COLUMNS) + \
             ["s", "eval_negative"]
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for i, sess in enumerate(table.sessions):
            row = [sess.visitor_id, repr(float(sess.start)), repr(float(sess.end))]
            row += [repr(float(v)) for v in table.features[i]]
            row += [str(int(table.s[i])), str(int(table.eval_negative[i]))]
            fh.write("\t".join(row) + "\n")


def read_sessions_tsv(path):
    """Load a session feature file; returns (meta, features, s, eval_negative)
    where meta is a list of (visitor_id, start, end) tuples."""
    expected = ["visitor_id", "start", "end"] + list(FEATURE_COLUMNS) + \
               ["s", "eval_negative"]
    meta = []
    feats = []
    s = []
    neg = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != expected:
            raise ConfigError("unrecognized session file header")
        for ln, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(expected):
                raise ConfigError(f"session file row {ln} has {len(parts)} "
                                  f"fields, expected {len(expected)}")
            meta.append((parts[0], float(parts[1]), float(parts[2])))
            feats.append([float(v) for v in parts[3:3 + len(FEATURE_COLUMNS)]])
            s.append(int(parts[-2]))
            neg.append(int(parts[-1]))
    features = (np.asarray(feats, dtype=np.float64) if feats
                else np.zeros((0, len(FEATURE_COLUMNS))))
    return meta, features, np.asarray(s, np.int8), np.asarray(neg, np.int8)
