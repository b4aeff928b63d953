import pytest
from hypothesis import given, strategies as st

from llnsim.medium import BROADCAST
from llnsim.trace import END, ROUTE_ADD, Trace, TraceEvent, TraceFormatError, loads, parse_line, read


def test_line_roundtrip_examples():
    for line in ("0 1664 DIO 5 *", "10 20 DAO 3 4 4", "30 40 DAO 4 5 4 3", "50 50 route-add 3 5 4",
                 "60 70 NO_PATH_DAO 3 4 4", "90 90 END 5 *"):
        assert parse_line(line).to_line() == line


def test_header_and_end_time():
    t = loads("# root 5\n# protocol tsch_orchestra\n\n0 10 DIO 5 *\n500 500 END 5 *\n")
    assert t.root == 5 and t.meta["protocol"] == "tsch_orchestra"
    assert t.end_time == 500
    assert t.nodes() == [5]
    assert Trace().end_time == 0


@pytest.mark.parametrize("line", ["1 2 DIO", "1 2 WARP 1 2", "x 2 DIO 1 2", "5 4 DIO 1 2", "1 2 route-add 3 5 4",
                                  "1 2 DAO 1 2 3 4 5"])
def test_rejects_malformed(line):
    with pytest.raises(TraceFormatError):
        parse_line(line)


def test_missing_root_header():
    with pytest.raises(TraceFormatError):
        _ = Trace().root


def test_write_read(tmp_path):
    t = Trace([TraceEvent(0, 5, "DIO", 1, BROADCAST), TraceEvent(9, 9, ROUTE_ADD, 2, 1, 2)], {"root": "1"})
    p = tmp_path / "t.log"
    t.write(p)
    assert read(p).dumps() == t.dumps()


events = st.builds(
    lambda s, d, kind, src, dst, via, target: TraceEvent(s, s if kind == ROUTE_ADD else s + d, kind, src, dst,
                                                         via, target if via is not None else None),
    st.integers(0, 10**9), st.integers(0, 10**6), st.sampled_from(["DIO", "DAO", "DIS", ROUTE_ADD, END]),
    st.integers(0, 50), st.one_of(st.just(BROADCAST), st.integers(0, 50)),
    st.one_of(st.none(), st.integers(0, 50)), st.one_of(st.none(), st.integers(0, 50)))


@given(st.lists(events, max_size=20), st.dictionaries(st.sampled_from(["root", "seed", "protocol"]),
                                                      st.from_regex(r"[a-z0-9_]{1,8}", fullmatch=True)))
def test_dump_parse_roundtrip(evs, meta):
    t = Trace(list(evs), dict(meta))
    back = loads(t.dumps())
    assert back.events == t.events and back.meta == t.meta
