use std::io::Write;

use impactlab::estimators::{
    bin_of, continuous_bin_masses, estimate_continuous, estimate_weighted, estimate_weighted_uniform, filter_events,
    load_events, read_events, write_events, BinAccumulator, EstimatorKind, LobEvent, RejectCode, Session, TradeSide,
};
use impactlab::Error;

const HEADER: &str = "ts_ns,side,size,bid_px_pre,ask_px_pre,vb_pre,va_pre,bid_px_post,ask_px_post,vb_post,va_post,tick";
const TEN_AM: i64 = 36_000_000_000_000;

fn event(side: TradeSide, size: f64, vb: f64, va: f64) -> LobEvent {
    let (vb_post, va_post) = match side {
        TradeSide::Buy => (vb, va - size),
        TradeSide::Sell => (vb - size, va),
    };
    LobEvent {
        ts_ns: TEN_AM,
        side,
        size,
        bid_px_pre: 100,
        ask_px_pre: 101,
        vb_pre: vb,
        va_pre: va,
        bid_px_post: 100,
        ask_px_post: 101,
        vb_post,
        va_post,
        tick: 0.01,
    }
}

fn load_str(body: &str) -> impactlab::Result<(Vec<LobEvent>, impactlab::estimators::LoadReport)> {
    read_events(format!("{HEADER}\n{body}").as_bytes(), "inline")
}

/// Midpoint-rule integral of the bin indicator along the depletion path.
fn quadrature_masses(e: &LobEvent, k: usize) -> Vec<f64> {
    let steps = 1_000_000;
    let dv = e.size / steps as f64;
    let mut out = vec![0.0; k];
    for i in 0..steps {
        let v = (i as f64 + 0.5) * dv;
        let imb = match e.side {
            TradeSide::Buy => e.vb_pre / (e.vb_pre + e.va_pre - v),
            TradeSide::Sell => (e.vb_pre - v) / (e.vb_pre + e.va_pre - v),
        };
        out[bin_of(imb, k)] += dv;
    }
    out
}

#[test]
fn well_formed_file_loads_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "{HEADER}").unwrap();
    writeln!(f, "{TEN_AM},buy,100,100,101,500,500,100,101,500,400,0.01").unwrap();
    writeln!(f, "{},sell,50,100,101,300,700,100,101,250,700,0.01", TEN_AM + 1).unwrap();
    writeln!(f, "{},B,10,100,101,300,700,100,101,300,690,0.01", TEN_AM + 2).unwrap();
    drop(f);
    let (events, report) = load_events(&path).unwrap();
    assert_eq!(events.len(), 3);
    assert_eq!(report.rows, 3);
    assert!(report.rejects.is_empty());
    assert!(report.nonmonotone_timestamps.is_empty());
    assert_eq!(events[2].side, TradeSide::Buy);
    assert_eq!(events[1].pre_imbalance(), Some(0.3));
}

#[test]
fn bad_rows_are_rejected_with_codes_and_lines() {
    let body = [
        format!("{TEN_AM},buy,100,100,101,0,0,100,101,0,0,0.01"),
        format!("{TEN_AM},buy,100,100,101,500,500,100,101,500,600,0.01"),
        format!("{TEN_AM},sell,10,100,101,-5,500,100,101,0,500,0.01"),
        format!("{TEN_AM},hold,10,100,101,5,500,100,101,0,500,0.01"),
        format!("{TEN_AM},buy,0,100,101,500,500,100,101,500,500,0.01"),
        format!("{TEN_AM},buy,100,100,101,500,500,100,101,500,400,0.01"),
    ]
    .join("\n");
    let (events, report) = load_str(&body).unwrap();
    assert_eq!(events.len(), 1);
    let codes: Vec<(u64, RejectCode)> = report.rejects.iter().map(|r| (r.line, r.code)).collect();
    assert_eq!(
        codes,
        vec![
            (2, RejectCode::UndefinedImbalance),
            (3, RejectCode::InvariantViolation),
            (4, RejectCode::NegativeVolume),
            (5, RejectCode::Parse),
            (6, RejectCode::NonpositiveSize),
        ]
    );
}

#[test]
fn missing_column_is_a_schema_error() {
    let text = "ts_ns,side,size\n1,buy,1\n";
    match read_events(text.as_bytes(), "short.csv") {
        Err(Error::Schema { path, reason }) => {
            assert_eq!(path, "short.csv");
            assert!(reason.contains("bid_px_pre"));
        }
        other => panic!("{other:?}"),
    }
    assert!(load_events(std::path::Path::new("/nonexistent/events.csv")).is_err());
}

#[test]
fn backwards_timestamps_warn_but_load() {
    let body = format!(
        "{},buy,1,100,101,5,5,100,101,5,4,0.01\n{TEN_AM},buy,1,100,101,5,5,100,101,5,4,0.01",
        TEN_AM + 10
    );
    let (events, report) = load_str(&body).unwrap();
    assert_eq!(events.len(), 2);
    assert_eq!(report.nonmonotone_timestamps, vec![3]);
}

#[test]
fn filter_applies_session_spread_depth_and_post_rule() {
    let mut wide = event(TradeSide::Buy, 10.0, 500.0, 500.0);
    wide.ask_px_pre = 102;
    let mut early = event(TradeSide::Sell, 10.0, 500.0, 500.0);
    early.ts_ns = 30_000_000_000_000;
    let too_big = event(TradeSide::Buy, 600.0, 500.0, 500.0);
    let mut clearing = event(TradeSide::Buy, 500.0, 500.0, 500.0);
    clearing.ask_px_post = 102;
    clearing.va_post = 300.0;
    let plain = event(TradeSide::Sell, 100.0, 300.0, 700.0);
    let (kept, report) = filter_events(&[wide, early, too_big, clearing, plain], Session::default());
    assert_eq!(kept.len(), 2);
    assert_eq!(
        (report.dropped_spread, report.dropped_session, report.dropped_depth),
        (1, 1, 1)
    );
    assert_eq!(report.post_adjusted, 1);
    assert_eq!(kept[0].va_post, 0.0);
    assert_eq!(kept[0].post_imbalance(), Some(1.0));
    assert!((report.volume_kept - 600.0).abs() < 1e-12);
    assert!((report.fraction_of_total - 600.0 / 1220.0).abs() < 1e-12);
}

#[test]
fn continuous_masses_match_quadrature() {
    for e in [
        event(TradeSide::Buy, 500.0, 500.0, 500.0),
        event(TradeSide::Sell, 300.0, 300.0, 700.0),
        event(TradeSide::Buy, 37.0, 123.0, 80.0),
        event(TradeSide::Sell, 12.5, 40.0, 3.0),
    ] {
        let exact = continuous_bin_masses(&e, 10).unwrap();
        let quad = quadrature_masses(&e, 10);
        let total: f64 = exact.iter().sum();
        assert!((total - e.size).abs() <= 1e-12 * e.size);
        for (a, b) in exact.iter().zip(&quad) {
            assert!((a - b).abs() < 1e-5 * e.size, "{exact:?} vs {quad:?}");
        }
    }
    // the 0.5 → 1 buy only touches the upper half
    let r = continuous_bin_masses(&event(TradeSide::Buy, 500.0, 500.0, 500.0), 10).unwrap();
    assert!(r[..5].iter().all(|&m| m == 0.0));
    assert!((r[5] - (1000.0 - 500.0 / 0.6)).abs() < 1e-9);
}

#[test]
fn small_trades_reduce_to_the_pre_trade_weighted_estimator() {
    let events: Vec<LobEvent> = [(100.0, 900.0), (450.0, 550.0), (870.0, 130.0), (999.0, 1.0)]
        .iter()
        .enumerate()
        .map(|(i, &(vb, va))| {
            let side = if i % 2 == 0 { TradeSide::Buy } else { TradeSide::Sell };
            event(side, 1e-6, vb, va)
        })
        .collect();
    let c = estimate_continuous(&events, 10).unwrap();
    let w = estimate_weighted(&events, 1.0, 10).unwrap();
    for (a, b) in c.values.iter().zip(&w.values) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn weighted_split_between_pre_and_post() {
    let mut e = event(TradeSide::Buy, 100.0, 450.0, 550.0);
    e.va_post = 450.0 * 0.45 / 0.55;
    let d = estimate_weighted(&[e.clone()], 0.5, 10).unwrap();
    let mut want = vec![0.0; 10];
    want[4] = 5.0;
    want[5] = 5.0;
    assert_eq!(d.values, want);
    let pre_only = estimate_weighted(&[e], 1.0, 10).unwrap();
    assert_eq!(pre_only.values[4], 10.0);
}

#[test]
fn equal_sizes_make_uniform_weights_irrelevant() {
    let events: Vec<LobEvent> = (0..50)
        .map(|i| {
            let vb = 20.0 * i as f64 + 5.0;
            event(
                if i % 3 == 0 { TradeSide::Sell } else { TradeSide::Buy },
                4.0,
                vb,
                1005.0 - vb,
            )
        })
        .collect();
    let a = estimate_weighted(&events, 0.3, 10).unwrap();
    let b = estimate_weighted_uniform(&events, 0.3, 10).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() < 1e-12);
    }
    // and with unequal sizes each trade counts once
    let two = [
        event(TradeSide::Buy, 100.0, 100.0, 900.0),
        event(TradeSide::Buy, 900.0, 950.0, 950.0),
    ];
    let u = estimate_weighted_uniform(&two, 1.0, 10).unwrap();
    assert_eq!(u.values[1], 5.0);
    assert_eq!(u.values[5], 5.0);
}

#[test]
fn estimators_normalize_and_reject_empty_streams() {
    let events: Vec<LobEvent> = (1..40)
        .map(|i| event(TradeSide::Sell, i as f64, 10.0 * i as f64, 400.0))
        .collect();
    for d in [
        estimate_weighted(&events, 0.5, 10).unwrap(),
        estimate_weighted_uniform(&events, 0.5, 7).unwrap(),
        estimate_continuous(&events, 13).unwrap(),
    ] {
        let mean = d.values.iter().sum::<f64>() / d.k() as f64;
        assert!((mean - 1.0).abs() < 1e-10);
    }
    assert!(matches!(estimate_continuous(&[], 10), Err(Error::EmptySample(_))));
    assert!(estimate_weighted(&events, 1.5, 10).is_err());
}

#[test]
fn merged_chunks_equal_one_pass() {
    let events: Vec<LobEvent> = (0..200)
        .map(|i| {
            let vb = (i * 37 % 991) as f64 + 1.0;
            let side = if i % 2 == 0 { TradeSide::Buy } else { TradeSide::Sell };
            event(side, 1.0 + (i % 5) as f64, vb, 1000.0 - vb)
        })
        .collect();
    let kind = EstimatorKind::Continuous;
    let mut whole = BinAccumulator::new(kind, 10).unwrap();
    events.iter().for_each(|e| whole.add(e));
    let mut parts: Vec<BinAccumulator> = events
        .chunks(33)
        .map(|c| {
            let mut a = BinAccumulator::new(kind, 10).unwrap();
            c.iter().for_each(|e| a.add(e));
            a
        })
        .collect();
    parts.reverse();
    let mut merged = BinAccumulator::new(kind, 10).unwrap();
    parts.iter().for_each(|p| merged.merge(p));
    let (a, b) = (whole.finish().unwrap(), merged.finish().unwrap());
    assert_eq!(a.used_events, b.used_events);
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn events_round_trip_through_csv() {
    let events = vec![
        event(TradeSide::Buy, 12.5, 40.0, 60.0),
        event(TradeSide::Sell, 3.0, 7.0, 9.0),
    ];
    let mut buf = Vec::new();
    write_events(&events, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), HEADER);
    let (back, report) = read_events(buf.as_slice(), "mem").unwrap();
    assert!(report.rejects.is_empty());
    assert_eq!(back, events);
}

#[test]
fn binned_density_csv_lists_bin_edges() {
    let d = estimate_weighted(&[event(TradeSide::Buy, 1.0, 5.0, 5.0)], 1.0, 4).unwrap();
    let mut buf = Vec::new();
    d.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "bin_lo,bin_hi,value");
    assert_eq!(lines.len(), 5);
    assert!(lines[3].starts_with("0.5,0.75,"));
}
