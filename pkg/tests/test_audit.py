import math
import random
import time

import numpy as np
import pytest

from greatscore import InvalidInput, local_great_score
from greatscore.audit import (
    AuditGroup,
    AuditSample,
    EndpointClient,
    EndpointConfig,
    ItemError,
    MockServer,
    audit_groups,
    query_predictions,
)
from greatscore.audit.client import RemoteClassifier, payload_key, to_vector
from greatscore.audit.groups import GroupReport, GroupResult
from greatscore.errors import EndpointError, ProtocolError
from greatscore.reporting import render
from greatscore.score import GlobalEstimate

OLD_GROUP_MEAN = 1.1906484304497252  # sqrt(pi/2) * 0.95, mpmath


def ulps(a, b):
    return abs(a - b) / math.ulp(max(abs(a), abs(b)))


def batch(n, dim=2):
    return [{"id": f"s{i}", "input": [float(i)] * dim} for i in range(n)]


def fast(url, **kw):
    kw.setdefault("rate_limit_per_s", 1000.0)
    kw.setdefault("backoff_base_s", 0.01)
    return EndpointConfig(url, **kw)


class TestQuery:
    def test_echo(self):
        with MockServer(lambda x: [0.9, 0.1]) as srv:
            out = query_predictions(fast(srv.url), batch(1))
        assert out[0].values == (0.9, 0.1)

    def test_cache_replay_makes_no_calls(self, tmp_path):
        with MockServer(lambda x: [0.9, 0.1]) as srv:
            cfg = fast(srv.url, cache_dir=str(tmp_path))
            first = EndpointClient(cfg).query(batch(3))
            hits = srv.hits
            again = EndpointClient(cfg)
            second = again.query(batch(3))
        assert hits == 3 and srv.hits == 3 and again.network_calls == 0
        assert first == second

    def test_cache_key_covers_url_and_input(self):
        assert payload_key("http://a/p", [1.0]) != payload_key("http://b/p", [1.0])
        assert payload_key("http://a/p", [1.0]) != payload_key("http://a/p", [1.5])

    def test_retry_schedule(self):
        delays = []
        with MockServer(lambda x: [0.7, 0.3], failures=[429, 429]) as srv:
            cfg = fast(srv.url, backoff_base_s=0.05, max_retries=3)
            out = EndpointClient(cfg, sleep=delays.append).query(batch(1))
        assert srv.hits == 3
        assert out[0].values == (0.7, 0.3)
        assert len(delays) == 2
        for attempt, d in enumerate(delays):
            assert d >= 0.05 * 2 ** attempt

    def test_retry_after_is_honoured(self):
        delays = []
        with MockServer(lambda x: [0.7, 0.3], failures=[503], retry_after=0.5) as srv:
            EndpointClient(fast(srv.url), sleep=delays.append).query(batch(1))
        assert delays == [0.5]

    def test_retries_exhausted(self):
        with MockServer(lambda x: [0.7, 0.3], failures=[500] * 5) as srv:
            out = EndpointClient(fast(srv.url, max_retries=2), sleep=lambda s: None).query(batch(1))
        assert isinstance(out[0], ItemError) and out[0].kind == "retries-exhausted"
        assert srv.hits == 3

    def test_permanent_client_error(self):
        with MockServer(lambda x: [0.7, 0.3], failures=[404]) as srv:
            out = EndpointClient(fast(srv.url), sleep=lambda s: None).query(batch(2))
        kinds = sorted(type(r).__name__ for r in out)
        assert kinds == ["ItemError", "PredictionVector"]
        assert srv.hits == 2

    def test_order_preserved_under_shuffled_latency(self):
        rnd = random.Random(3)
        delays = {i: rnd.uniform(0, 0.03) for i in range(24)}
        with MockServer(lambda x: [x[0] / 100, 1 - x[0] / 100], latency=lambda x: delays[int(x[0])]) as srv:
            out = EndpointClient(fast(srv.url, max_in_flight=8)).query(batch(24))
        assert [r.values[0] for r in out] == [i / 100 for i in range(24)]

    def test_rate_limit(self):
        rate, n = 40.0, 12
        with MockServer(lambda x: [0.6, 0.4]) as srv:
            EndpointClient(EndpointConfig(srv.url, rate_limit_per_s=rate, max_in_flight=4)).query(batch(n))
            times = sorted(srv.request_times)
        for i in range(n):
            for j in range(i + 1, n):
                window = times[j] - times[i]
                # token bucket of capacity one: at most rate*window + 1 requests in any window
                assert j - i + 1 <= rate * window + 1 + 1e-6 + 0.02 * rate

    def test_protocol_errors(self):
        replies = {0: [0.5, 0.5], 1: [1.4, 0.1], 2: [0.2, 0.3, 0.5]}
        with MockServer(lambda x: replies[int(x[0])]) as srv:
            out = EndpointClient(fast(srv.url, max_in_flight=1)).query(batch(3))
        assert out[0].values == (0.5, 0.5)
        assert isinstance(out[1], ItemError) and out[1].kind == "protocol" and out[1].item_id == "s1"
        assert isinstance(out[2], ItemError) and "expected 2 classes" in str(out[2])

    def test_named_classes(self):
        with MockServer(lambda x: {"cat": 0.2, "dog": 0.8}) as srv:
            cfg = fast(srv.url, class_order=["dog", "cat"])
            assert query_predictions(cfg, batch(1))[0].values == (0.8, 0.2)
            bare = query_predictions(fast(srv.url), batch(1))[0]
        assert isinstance(bare, ItemError)

    def test_renormalize(self):
        assert to_vector([2.0, 2.0], renormalize=True) == [0.5, 0.5]
        assert to_vector([0.3, 0.3]) == [0.3, 0.3]
        with pytest.raises(ProtocolError):
            to_vector("nope")

    def test_auth_header_sent(self, monkeypatch):
        with MockServer(lambda x: [0.6, 0.4]) as srv:
            query_predictions(fast(srv.url, auth_header="X-Key: abc"), batch(1))
            monkeypatch.setenv("GREATSCORE_AUTH_HEADER", "Authorization: Bearer t")
            query_predictions(fast(srv.url), batch(1))
        assert srv.headers[0]["X-Key"] == "abc"
        assert srv.headers[1]["Authorization"] == "Bearer t"

    def test_config_validation(self):
        for kw in ({"url": "ftp://x"}, {"url": "http://x", "max_in_flight": 0},
                   {"url": "http://x", "rate_limit_per_s": 0}, {"url": "http://x", "max_retries": -1}):
            with pytest.raises(InvalidInput):
                EndpointConfig(**kw)
        with pytest.raises(InvalidInput):
            EndpointClient(fast("http://localhost:1")).query([])

    def test_remote_classifier_raises_on_failure(self):
        with MockServer(lambda x: [0.6, 0.4], failures=[400]) as srv:
            clf = RemoteClassifier(fast(srv.url, max_in_flight=1))
            with pytest.raises(EndpointError):
                clf(np.zeros((2, 2)))
            assert clf(np.zeros((1, 2))).tolist() == [[0.6, 0.4]]


def group(name, n, start=0, label=0):
    return AuditGroup(name, tuple(AuditSample(f"{name}{i}", label, (float(start + i),)) for i in range(n)))


class TestGroups:
    def test_constant_group(self):
        with MockServer(lambda x: [0.975, 0.025]) as srv:
            rep = audit_groups(fast(srv.url), [group("Old", 5)])
        assert ulps(rep.groups[0].estimate.mean, OLD_GROUP_MEAN) <= 1
        assert rep.overall == rep.groups[0].estimate

    def test_weighted_overall(self):
        top = 1 / math.sqrt(math.pi / 2)
        replies = {0.0: [top, 0.0], 1.0: [top / 2, 0.0]}
        groups = [group("a", 1, start=0), AuditGroup("b", tuple(AuditSample(f"b{i}", 0, (1.0,)) for i in range(3)))]
        with MockServer(lambda x: replies[x[0]]) as srv:
            rep = audit_groups(fast(srv.url), groups)
        means = [g.estimate.mean for g in rep.groups]
        assert ulps(means[0], 1.0) <= 1 and ulps(means[1], 0.5) <= 1
        assert ulps(rep.overall.mean, 0.625) <= 1
        assert ulps(rep.overall.mean, (means[0] + 3 * means[1]) / 4) <= 1

    def test_failures_excluded_and_counted(self):
        with MockServer(lambda x: [0.9, 0.1], failures=[403]) as srv:
            rep = audit_groups(fast(srv.url, max_in_flight=1), [group("a", 3), group("b", 1, start=10)])
        a, b = rep.groups
        assert (a.samples, a.failures, a.estimate.count) == (3, 1, 2)
        assert rep.overall.count == 3

    def test_all_failed_group_invalid(self):
        with MockServer(lambda x: [0.9, 0.1], failures=[403]) as srv:
            rep = audit_groups(fast(srv.url, max_in_flight=1), [group("dead", 1), group("ok", 2, start=5)])
        assert not rep.groups[0].valid and rep.groups[1].valid
        assert "null" in render(rep)

    def test_cache_rerun_identical(self, tmp_path):
        groups = [group("a", 4), group("b", 3, start=4, label=1)]
        with MockServer(lambda x: [0.3 + 0.01 * x[0], 0.4]) as srv:
            cfg = fast(srv.url, cache_dir=str(tmp_path))
            first = audit_groups(cfg, groups)
            hits = srv.hits
            client = EndpointClient(cfg)
            second = audit_groups(cfg, groups, client=client)
        assert first == second and srv.hits == hits and client.network_calls == 0

    def test_group_validation(self):
        with pytest.raises(InvalidInput):
            AuditGroup("empty", ())
        with pytest.raises(InvalidInput):
            AuditGroup("dup", (AuditSample("x", 0, (1.0,)), AuditSample("x", 0, (2.0,))))


def test_group_report_golden_format():
    # BetaFace row of the published group table: fixture values only
    rep = GroupReport((GroupResult("Old", GlobalEstimate(0.950, 1), 1, 0),
                       GroupResult("Without Eyeglasses", GlobalEstimate(0.973, 1), 1, 0)), None)
    text = render(rep, "csv")
    assert text == ("name,mean,count,epsilon,delta\n"
                    "Old,0.94999999999999996,1,,\n"
                    "Without Eyeglasses,0.97299999999999998,1,,\n"
                    "overall,,0,,\n")
    rows = [line.split(",") for line in text.splitlines()[1:3]]
    assert [float(r[1]) for r in rows] == [0.950, 0.973]
    assert [f"{float(r[1]):.3f}" for r in rows] == ["0.950", "0.973"]
