import random

import pytest

NORMAL_TEMPLATES = [
    "client connected from host {h} port {p}",
    "request served in {ms} ms for user {u}",
    "heartbeat ok node {n} uptime {s} seconds",
    "cache hit ratio {pct} percent on shard {n}",
    "scheduled job {u} finished status success",
    "received block blk_{b} of size {sz} from host {h}",
    "replication of blk_{b} to node {n} complete",
    "session {u} renewed lease for {s} seconds",
    "packet responder for blk_{b} terminating",
    "verification succeeded for blk_{b}",
    "allocating new block blk_{b} on node {n}",
    "deleting expired entry {u} from cache shard {n}",
    "metrics snapshot written {sz} bytes",
    "user {u} authenticated via token",
    "rebalancing shard {n} moved {sz} records",
    "connection from host {h} closed cleanly",
    "lease recovery for blk_{b} initiated by node {n}",
    "checkpoint {u} committed in {ms} ms",
    "garbage collector freed {sz} kb in {ms} ms",
    "config reload completed revision {u}",
]

ANOMALY_TEMPLATES = [
    "fatal disk error detected on device {n} unrecoverable sectors",
    "kernel panic fatal exception unable to handle paging request at {b}",
    "error raid controller reset storm degraded array {n}",
    "error filesystem corruption found inode {b} marked bad",
    "warning power supply failure unit {n} voltage out of range",
]


def synth_line(rng: random.Random, template: str) -> str:
    return template.format(
        h=rng.randint(1, 40),
        p=rng.randint(1024, 65535),
        ms=rng.randint(1, 900),
        u=rng.randint(1, 5000),
        n=rng.randint(1, 16),
        s=rng.randint(10, 9000),
        pct=rng.randint(50, 99),
        b=rng.randint(10**8, 10**9),
        sz=rng.randint(100, 10**6),
    )


def write_synthetic_corpus(
    path,
    n_lines: int,
    anomaly_rate: float = 0.01,
    burst_len: int = 40,
    seed: int = 7,
) -> int:
    """Generic-format corpus: normal traffic plus anomaly-line bursts.

    Returns the number of anomalous lines written.
    """
    rng = random.Random(seed)
    n_anomalies = int(n_lines * anomaly_rate)
    n_bursts = max(1, n_anomalies // burst_len)
    burst_starts = sorted(
        rng.sample(range(burst_len, n_lines - burst_len), n_bursts)
    )
    burst_at = {}
    for start in burst_starts:
        for off in range(burst_len):
            burst_at[start + off] = True
    written_anoms = 0
    with open(path, "w") as f:
        for i in range(n_lines):
            if burst_at.get(i):
                text = synth_line(rng, rng.choice(ANOMALY_TEMPLATES))
                f.write(f"1 {text}\n")
                written_anoms += 1
            else:
                text = synth_line(rng, rng.choice(NORMAL_TEMPLATES))
                f.write(f"0 {text}\n")
    return written_anoms


@pytest.fixture
def small_corpus(tmp_path):
    path = tmp_path / "corpus.log"
    write_synthetic_corpus(path, n_lines=6000, anomaly_rate=0.02, burst_len=30)
    return path
