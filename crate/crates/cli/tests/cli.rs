use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn emrange(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emrange"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn worked_example_query() {
    let dir = tempfile::tempdir().unwrap();
    // C_1 = {2, 5}, C_2 = {2}.
    fs::write(dir.path().join("sets.txt"), "1 2\n1 5\n2 2\n").unwrap();
    let b = emrange(
        &[
            "build",
            "--structure",
            "colored-range",
            "--input",
            "sets.txt",
            "--out",
            "ix",
        ],
        dir.path(),
    );
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    assert!(dir.path().join("ix/manifest.json").exists());
    let q = emrange(
        &["query", "--index", "ix", "--verify", "sets.txt", "2", "2"],
        dir.path(),
    );
    assert_eq!(q.status.code(), Some(0));
    assert_eq!(stdout(&q).trim(), "2");
    let q = emrange(&["query", "--index", "ix", "1", "2"], dir.path());
    assert_eq!(stdout(&q).trim(), "2 5");
}

#[test]
fn verify_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.txt"), "1 1\n2 2\n").unwrap();
    fs::write(dir.path().join("b.txt"), "1 1\n2 3\n").unwrap();
    emrange(
        &[
            "build",
            "--structure",
            "colored-range",
            "--input",
            "a.txt",
            "--out",
            "ix",
        ],
        dir.path(),
    );
    let q = emrange(
        &["query", "--index", "ix", "--verify", "b.txt", "1", "2"],
        dir.path(),
    );
    assert_eq!(q.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        emrange(&["gen", "shapes", "--size", "3"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        emrange(&["query", "--index", "nowhere", "1", "2"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        emrange(
            &["bench", "--structure", "topk", "--queries", "x"],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        emrange(
            &[
                "build",
                "--structure",
                "topk",
                "--input",
                "absent.txt",
                "--out",
                "ix"
            ],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
    // k = 0 is rejected at build time.
    fs::write(dir.path().join("c.txt"), "ab\t1\n").unwrap();
    assert_eq!(
        emrange(
            &[
                "build",
                "--structure",
                "topk",
                "--k",
                "0",
                "--input",
                "c.txt",
                "--out",
                "ix"
            ],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn bench_zero_queries_prints_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = emrange(
        &["bench", "--structure", "threesided", "--queries", "0"],
        dir.path(),
    );
    assert!(o.status.success());
    assert_eq!(stdout(&o), "structure,n,B,w,k,reads,writes,sios,micros\n");
}

fn strip_micros(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn bench_is_deterministic_and_verified() {
    let dir = tempfile::tempdir().unwrap();
    for s in ["threesided", "colored-range", "colored-prefix", "topk"] {
        let args = [
            "bench",
            "--structure",
            s,
            "--sweep-n",
            "256,512",
            "--queries",
            "40",
            "--seed",
            "7",
            "--k",
            "3",
            "--verify",
        ];
        let a = emrange(&args, dir.path());
        let b = emrange(&args, dir.path());
        assert_eq!(
            a.status.code(),
            Some(0),
            "{s}: {}",
            String::from_utf8_lossy(&a.stderr)
        );
        let (a, b) = (stdout(&a), stdout(&b));
        assert_eq!(a.lines().count(), 81);
        assert_eq!(strip_micros(&a), strip_micros(&b));
        assert!(a.lines().skip(1).all(|l| l.starts_with(s)));
    }
}

#[test]
fn gen_is_deterministic_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    emrange(
        &[
            "gen", "points", "--size", "100", "--seed", "1", "--out", "p1.txt",
        ],
        p,
    );
    emrange(
        &[
            "gen", "points", "--size", "100", "--seed", "1", "--out", "p2.txt",
        ],
        p,
    );
    assert_eq!(
        fs::read(p.join("p1.txt")).unwrap(),
        fs::read(p.join("p2.txt")).unwrap()
    );

    let c = stdout(&emrange(
        &["gen", "colored", "--size", "10", "--colors", "50"],
        p,
    ));
    for line in c.lines() {
        let v: Vec<u64> = line.split(' ').map(|t| t.parse().unwrap()).collect();
        assert!(
            (1..=10).contains(&v[0]) && (1..=50).contains(&v[1]),
            "{line}"
        );
    }

    let corpus = stdout(&emrange(&["gen", "corpus", "--size", "1000"], p));
    let strings: Vec<&str> = corpus
        .lines()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(strings.len(), 1000);
    assert!(strings.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn every_structure_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    emrange(&["gen", "points", "--size", "300", "--out", "pts.txt"], p);
    emrange(
        &[
            "gen",
            "corpus",
            "--size",
            "200",
            "--colors",
            "30",
            "--out",
            "corpus.txt",
        ],
        p,
    );
    let cases: [(&str, &str, &[&str]); 4] = [
        ("threesided", "pts.txt", &["10", "200", "150"]),
        ("colored-prefix", "corpus.txt", &["a"]),
        ("topk", "corpus.txt", &["b"]),
        ("topk", "corpus.txt", &[]),
    ];
    for (s, input, q) in cases {
        let b = emrange(
            &[
                "build",
                "--structure",
                s,
                "--input",
                input,
                "--k",
                "4",
                "--block-words",
                "16",
                "--word-bits",
                "32",
                "--out",
                s,
            ],
            p,
        );
        assert!(
            b.status.success(),
            "{s}: {}",
            String::from_utf8_lossy(&b.stderr)
        );
        let mut args = vec!["query", "--index", s, "--verify", input];
        args.extend_from_slice(q);
        let o = emrange(&args, p);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{s} {q:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}
