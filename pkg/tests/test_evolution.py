import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import day, ev, random_log
from oracles import replay
from prefattach.evolution import (
    EventLogError, EvolutionLog, SufficientStats, concat_stats, extract_increments, ingest,
    partition_periods, read_events, split_stats, summarize,
)

FIXTURE = """from,to,type,action,prev_date,curr_date
A,B,Imports,added,2021-01-01,2021-01-02
C,B,Imports,added,2021-01-02,2021-01-03
A,B,Imports,removed,2021-01-02,2021-01-03
D,A,Suggests,added,2021-01-03,2021-01-05
"""


@pytest.fixture
def fixture_csv(tmp_path):
    p = tmp_path / "events.csv"
    p.write_text(FIXTURE)
    return p


def panel_records(panel):
    """{(t, vertex id): (x, y, z, k_prev, k)} from the package's panel."""
    out = {}
    for s in panel.iter_steps():
        for v in range(len(s.k_prev)):
            out[(s.t, v)] = (s.x[v], s.y[v], s.z[v], s.k_prev[v], s.k[v])
    return out


def oracle_records(log):
    ref = replay([(e.source, e.target, e.dep_type, e.action, e.prev_date, e.curr_date)
                  for e in log.events])
    out = {}
    for t, date in enumerate(log.timeline[1:], start=1):
        for name, row in ref.get(date, {}).items():
            out[(t, log.vertex_index[name])] = row
    return out


class TestIngest:
    def test_three_row_log(self):
        log = EvolutionLog.from_events([ev("A", "B", "added", 1), ev("C", "B", "added", 2),
                                        ev("A", "B", "removed", 2, prev=1)])
        assert log.timeline == [day(0), day(1), day(2)]
        assert len(log.vertex_names) == 3
        assert log.n_vertices.tolist() == [0, 2, 3]

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        log = ingest(p, ["Imports"])
        assert log.timeline == [] and log.vertex_names == [] and log.T == 0

    def test_removal_of_absent_edge(self):
        with pytest.raises(EventLogError):
            EvolutionLog.from_events([ev("A", "B", "removed", 1)])

    def test_duplicate_addition(self):
        with pytest.raises(EventLogError):
            EvolutionLog.from_events([ev("A", "B", "added", 1), ev("A", "B", "added", 2)])

    def test_action_case_insensitive(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(FIXTURE.replace("removed", "Removed"))
        assert sum(e.action == "removed" for e in read_events(p)) == 1

    @pytest.mark.parametrize("row, msg", [
        ("A,B,Imports,added,2021-01-01", "line 2"),
        ("A,B,Imports,added,2021-13-01,2021-01-02", "line 2"),
        ("A,B,Imports,kept,2021-01-01,2021-01-02", "line 2"),
        ("A,A,Imports,added,2021-01-01,2021-01-02", "line 2"),
    ])
    def test_malformed_row_reports_line(self, tmp_path, row, msg):
        p = tmp_path / "e.csv"
        p.write_text("from,to,type,action,prev_date,curr_date\n" + row + "\n")
        with pytest.raises(EventLogError, match=msg):
            read_events(p)

    def test_type_filter(self, fixture_csv):
        log = ingest(fixture_csv, ["Imports"])
        assert set(log.vertex_names) == {"A", "B", "C"}
        assert len(ingest(fixture_csv, ["Imports", "Suggests"]).vertex_names) == 4

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ingest(tmp_path / "nope.csv", ["Imports"])

    def test_typed_edges_merge(self):
        # second typed copy keeps the untyped edge alive
        log = EvolutionLog.from_events([
            ev("A", "B", "added", 1, typ="Imports"), ev("C", "B", "added", 1),
            ev("A", "B", "added", 2, typ="Depends", prev=1),
            ev("A", "B", "removed", 3, typ="Imports", prev=2)])
        panel = extract_increments(log)
        assert panel.step(3).z.sum() == 0
        assert log.edge_set_at(3) == {(0, 1), (2, 1)}

    def test_csv_round_trip(self, tmp_path, rng):
        log = random_log(rng, types=("Imports", "Depends"))
        p = tmp_path / "out.csv"
        log.to_csv(p)
        back = EvolutionLog.from_events(read_events(p))
        assert back.timeline == log.timeline
        assert back.vertex_names == log.vertex_names
        assert back.edge_set_at(back.T) == log.edge_set_at(log.T)

    def test_time_of(self, fixture_csv):
        log = ingest(fixture_csv, ["Imports", "Suggests"])
        assert log.time_of(day(2)) == 2 and log.time_of(day(3)) == 2 and log.time_of(day(4)) == 3
        with pytest.raises(KeyError):
            log.time_of(day(-5))


class TestIncrements:
    def test_new_vertex_is_external(self):
        log = EvolutionLog.from_events([ev("A", "B", "added", 1), ev("C", "B", "added", 2)])
        s = extract_increments(log).step(2)
        b = log.vertex_index["B"]
        assert (s.x[b], s.y[b], s.z[b]) == (0, 1, 0)

    def test_internal_add_and_delete_same_step(self):
        log = EvolutionLog.from_events([
            ev("A", "E", "added", 1), ev("D", "B", "added", 1),
            ev("A", "B", "added", 2, prev=1), ev("D", "B", "removed", 2, prev=1)])
        s = extract_increments(log).step(2)
        b = log.vertex_index["B"]
        assert (s.x[b], s.z[b]) == (1, 1)
        assert s.k[b] == s.k_prev[b] == 1

    def test_untouched_vertices_zero(self):
        log = EvolutionLog.from_events([ev("A", "B", "added", 1), ev("E", "F", "added", 2)])
        s = extract_increments(log).step(2)
        assert not (s.x.any() or s.y.any() or s.z.any())
        assert np.array_equal(s.k, s.k_prev)

    def test_same_date_churn_cancels(self):
        log = EvolutionLog.from_events([
            ev("A", "B", "added", 1), ev("C", "B", "added", 2, prev=1),
            ev("C", "B", "removed", 2, prev=1)])
        s = extract_increments(log).step(2)
        assert not (s.x.any() or s.y.any() or s.z.any())

    def test_matches_replay_oracle(self, rng):
        for _ in range(30):
            log = random_log(rng, n_dates=int(rng.integers(2, 8)), n_names=10,
                             types=("Imports", "Depends"))
            panel = extract_increments(log)
            got = panel_records(panel)
            want = oracle_records(log)
            assert got.keys() == want.keys()
            for key in want:
                assert tuple(int(v) for v in got[key]) == want[key], key
            assert panel.check_identity()

    def test_degrees_at_matches_edge_set(self, rng):
        log = random_log(rng, n_dates=6, n_names=10)
        panel = extract_increments(log)
        for t in range(panel.T + 1):
            assert np.array_equal(panel.degrees_at(t), log.degrees_at(t)[0])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0, 0.7))
    def test_identity_property(self, seed, p_remove):
        log = random_log(np.random.default_rng(seed), n_dates=5, p_remove=p_remove)
        panel = extract_increments(log)
        for s in panel.iter_steps():
            assert np.array_equal(s.k, s.k_prev + s.x + s.y - s.z)
            assert np.all(s.z <= s.k_prev)
        # vertex count never decreases
        assert np.all(np.diff(panel.n_vertices) >= 0)

    def test_replay_reproduces_final_edges(self, rng):
        log = random_log(rng, n_dates=8, n_names=12)
        panel = extract_increments(log)
        assert np.array_equal(panel.degrees_at(panel.T), log.degrees_at(log.T)[0])


class TestSummarize:
    def test_direct_count(self):
        # a and b point at each other and both at c: degrees [1, 1, 2]
        log = EvolutionLog.from_events([
            ev("a", "b", "added", 1), ev("b", "a", "added", 1),
            ev("a", "c", "added", 1), ev("b", "c", "added", 1),
            ev("d", "a", "added", 2, prev=1)])
        stats = summarize(extract_increments(log), "external")
        assert stats.T == 1
        assert stats.histogram(0) == {1: 2, 2: 1}
        assert stats.observations(0) == {(1, 1): 1}
        assert stats.A.tolist() == [1.0]

    def test_all_zero(self):
        log = EvolutionLog.from_events([ev("a", "b", "added", 1), ev("a", "c", "added", 2)])
        stats = summarize(extract_increments(log), "external")
        assert stats.observations(0) == {}
        assert stats.A_total == 0

    def test_bad_category(self):
        log = EvolutionLog.from_events([ev("a", "b", "added", 1)])
        with pytest.raises(ValueError):
            summarize(extract_increments(log), "sideways")

    @pytest.mark.parametrize("category", ["external", "internal", "deletion"])
    def test_recount(self, rng, category):
        log = random_log(rng, n_dates=6, n_names=20, max_events=10)
        panel = extract_increments(log)
        stats = summarize(panel, category)
        j = 0
        for s in panel.iter_steps():
            if len(s.k_prev) == 0:
                continue
            inc = s.increment(category)
            hist = {}
            obs = {}
            for k, y in zip(s.k_prev.tolist(), inc.tolist()):
                hist[k] = hist.get(k, 0) + 1
                if y > 0:
                    obs[(k, y)] = obs.get((k, y), 0) + 1
            assert stats.histogram(j) == hist
            assert stats.observations(j) == obs
            assert stats.A[j] == inc.sum()
            j += 1
        assert j == stats.T

    def test_csv_round_trip(self, tmp_path, rng):
        stats = summarize(extract_increments(random_log(rng, n_names=15)), "external")
        p = tmp_path / "s.csv"
        stats.to_csv(p)
        back = SufficientStats.from_csv(p, "external")
        for j in range(stats.T):
            assert back.histogram(j) == stats.histogram(j)
            assert back.observations(j) == stats.observations(j)
        assert back.log_y_factorial == pytest.approx(stats.log_y_factorial)

    def test_from_csv_rejects_orphan_increment(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("t,k,y,count\n1,1,-1,3\n1,2,1,1\n")
        with pytest.raises(EventLogError):
            SufficientStats.from_csv(p)

    def test_concat_inverts_split(self, rng):
        stats = summarize(extract_increments(random_log(rng, n_dates=9, n_names=15)), "external")
        back = concat_stats(split_stats(stats, 4))
        assert back.T == stats.T
        for j in range(stats.T):
            assert back.histogram(j) == stats.histogram(j)
            assert back.observations(j) == stats.observations(j)


class TestPartition:
    def test_fixed_width(self):
        periods = partition_periods([day(i) for i in range(60)], 30)
        assert [p[2] for p in periods] == [30, 30]

    def test_monthly(self):
        dates = [day(i) for i in range(0, 59, 3)]  # Jan 1 .. Feb 27
        periods = partition_periods(dates, "monthly")
        assert len(periods) == 2
        assert all(dates[i].month == 1 for i in periods[0][1])
        assert all(dates[i].month == 2 for i in periods[1][1])

    def test_truncation(self):
        periods = partition_periods(list(range(60)), 90)
        assert len(periods) == 1 and periods[0][2] == 60

    def test_covers_every_point_once(self):
        periods = partition_periods(list(range(23)), 5)
        idx = np.concatenate([p[1] for p in periods])
        assert idx.tolist() == list(range(23))

    @pytest.mark.parametrize("bad", [0, -3])
    def test_bad_width(self, bad):
        with pytest.raises(ValueError):
            partition_periods(list(range(5)), bad)

    def test_empty(self):
        with pytest.raises(ValueError):
            partition_periods([], 5)
