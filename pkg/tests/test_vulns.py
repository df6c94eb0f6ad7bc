import pytest

from libam.areas import DetectionReport, ReusedTplEntry, ReuseAreaEntry
from libam.vulns import (
    CONFIDENCE_HIGH,
    CONFIDENCE_LOW,
    CveMapError,
    associate,
    identify_version,
    load_cve_map,
    normalize_name,
)

HEADER = "cve_id,tpl_id,versions,fn_names,cwe\n"


def test_load_two_entries():
    text = HEADER + "CVE-1,libz,1.0;1.1,inflate;deflate,CWE-787\nCVE-2,bzip2,*,,\n"
    entries = load_cve_map(text)
    assert len(entries) == 2
    assert entries[0].affected_versions == {"1.0", "1.1"}
    assert entries[0].vulnerable_fn_names == {"inflate", "deflate"}
    assert entries[0].cwe == "CWE-787"
    assert entries[1].affected_versions is None  # '*' = all versions


def test_patchless_entry_flagged():
    entries = load_cve_map(HEADER + "CVE-9,libfoo,*,,\n")
    assert entries[0].patchless


def test_duplicate_entry_rejected():
    text = HEADER + "CVE-1,libz,*,,\nCVE-1,libz,1.0,,\n"
    with pytest.raises(CveMapError, match="line 3"):
        load_cve_map(text)


def test_malformed_row_reports_line():
    with pytest.raises(CveMapError, match="line 2"):
        load_cve_map(HEADER + "CVE-1,libz,1.0\n")


def test_header_required():
    with pytest.raises(CveMapError, match="header"):
        load_cve_map("a,b,c,d,e\nCVE-1,libz,*,,\n")


def test_normalize_name_strips_decorations():
    assert normalize_name("__memcpy") == "memcpy"
    assert normalize_name("compress.isra.0") == "compress"
    assert normalize_name("sort.part.3.isra.1") == "sort"
    assert normalize_name("plain") == "plain"


def test_identify_version_by_overlap():
    ranking = identify_version({"a", "c", "d"}, {"1.0": {"a", "b"}, "1.1": {"a", "c"}})
    assert ranking.ranked[0] == ("1.1", 1.0)
    assert ranking.ranked[1] == ("1.0", 0.5)
    assert not ranking.unknown


def test_identify_version_no_overlap_flags_unknown():
    ranking = identify_version({"x"}, {"1.0": {"a"}, "1.1": {"b"}})
    assert ranking.ranked == ()
    assert ranking.unknown
    assert ranking.best() is None


def test_identify_version_ties_all_reported():
    ranking = identify_version({"a"}, {"1.0": {"a", "b"}, "1.1": {"a", "c"}})
    assert [v for v, _ in ranking.ranked] == ["1.0", "1.1"]
    assert ranking.ranked[0][1] == ranking.ranked[1][1]


def test_identify_version_synthetic_markers(rng):
    hits = 0
    trials = 40
    for t in range(trials):
        versions = {}
        common = {f"shared{i}" for i in range(30)}
        for v in range(20):
            versions[f"v{v:02d}"] = common | {f"marker-{t}-{v}-{i}" for i in range(6)}
        true_version = f"v{int(rng.integers(20)):02d}"
        target = common | {s for s in versions[true_version] if "marker" in s}
        ranking = identify_version(target, versions)
        hits += int(ranking.best() == true_version)
    assert hits / trials >= 0.95


def sample_report():
    return DetectionReport(
        target="firm1",
        reused_tpls=[ReusedTplEntry("bzip2", 0.92, 4), ReusedTplEntry("zlib", 0.88, 3)],
        reuse_areas=[
            ReuseAreaEntry(
                tpl="bzip2",
                target_anchor="fn_0001",
                members=("fn_0001", "fn_0002"),
                name_map=(("fn_0001", "BZ2_bzCompress"), ("fn_0002", "BZ2_blockSort")),
            )
        ],
    )


def test_patch_name_match_gives_high_confidence():
    cves = load_cve_map(HEADER + "CVE-2019-1,bzip2,*,BZ2_bzCompress,\n")
    rows = associate(sample_report(), cves)
    assert len(rows) == 1
    assert rows[0].confidence == CONFIDENCE_HIGH
    assert rows[0].matched_fn == "BZ2_bzCompress"


def test_absent_patch_function_filters_association():
    cves = load_cve_map(HEADER + "CVE-2019-2,bzip2,*,BZ2_decompress,\n")
    assert associate(sample_report(), cves) == []


def test_patchless_cve_low_confidence():
    cves = load_cve_map(HEADER + "CVE-2019-3,zlib,*,,\n")
    rows = associate(sample_report(), cves)
    assert len(rows) == 1
    assert rows[0].confidence == CONFIDENCE_LOW
    assert rows[0].matched_fn is None


def test_undetected_tpl_not_associated():
    cves = load_cve_map(HEADER + "CVE-2019-4,openssl,*,,\n")
    assert associate(sample_report(), cves) == []


def test_high_confidence_subset_of_tpl_level(rng):
    names = ["BZ2_bzCompress", "BZ2_blockSort", "inflate", "none_such"]
    for trial in range(20):
        picked = sorted(rng.choice(names, size=int(rng.integers(1, 4)), replace=False))
        rows_text = "".join(
            f"CVE-{trial}-{i},bzip2,*,{name},\n" for i, name in enumerate(picked)
        )
        cves = load_cve_map(HEADER + rows_text)
        with_patch = associate(sample_report(), cves)
        patchless = load_cve_map(
            HEADER + "".join(f"CVE-{trial}-{i},bzip2,*,,\n" for i in range(len(picked)))
        )
        tpl_level = associate(sample_report(), patchless)
        assert {(r.target, r.tpl) for r in with_patch} <= {(r.target, r.tpl) for r in tpl_level}


def test_version_constraint_filters():
    from libam.vulns import VersionRanking

    cves = load_cve_map(HEADER + "CVE-5,bzip2,1.0;1.1,BZ2_bzCompress,\n")
    identified = {"bzip2": VersionRanking(ranked=(("1.2", 0.9),), unknown=False)}
    assert associate(sample_report(), cves, identified) == []
    identified_ok = {"bzip2": VersionRanking(ranked=(("1.1", 0.9),), unknown=False)}
    assert len(associate(sample_report(), cves, identified_ok)) == 1


def test_version_constraints_never_add_associations():
    from libam.vulns import VersionRanking

    cves = load_cve_map(
        HEADER + "CVE-6,bzip2,1.0,BZ2_bzCompress,\nCVE-7,zlib,*,,\nCVE-8,bzip2,*,BZ2_blockSort,\n"
    )
    unconstrained = associate(sample_report(), cves)
    constrained = associate(
        sample_report(), cves, {"bzip2": VersionRanking(ranked=(("2.0", 1.0),), unknown=False)}
    )
    assert {r.cve for r in constrained} <= {r.cve for r in unconstrained}
