//! Hand-computed fixtures shared by the module tests and the acceptance run.
//! Each check returns the list of mismatches; empty means pass.

use pausetag::corpus::{BioTag, Token, Utterance};
use pausetag::encoder::{
    bin_pause, loss_bert, loss_hbc, loss_nlr, normalize_pause, BinningScheme, FineBin, HeadPredictions, PauseBin,
    PauseTarget, PretrainExample,
};
use pausetag::metrics::{compare, evaluate, Counts, EvalOptions, EvalReport, Prediction};
use pausetag::report::render_comparison;

pub const LOSS_TOLERANCE: f64 = 1e-10;

fn expect_close(out: &mut Vec<String>, what: &str, got: f64, want: f64, tol: f64) {
    if (got - want).abs() > tol || !got.is_finite() {
        out.push(format!("{what}: got {got}, expected {want}"));
    }
}

fn example(mlm: &[(usize, usize)], pauses: &[f64]) -> PretrainExample {
    let scheme = BinningScheme::default();
    let n = mlm.iter().map(|&(p, _)| p + 1).max().unwrap_or(0).max(pauses.len());
    let mut original = vec![4; n];
    for &(p, id) in mlm {
        original[p] = id;
    }
    PretrainExample {
        id: "fixture".into(),
        input_ids: vec![2; n],
        original_ids: original,
        mlm_positions: mlm.iter().map(|&(p, _)| p).collect(),
        pause_targets: pauses
            .iter()
            .enumerate()
            .map(|(i, &d)| PauseTarget {
                position: i,
                duration_ms: d,
                bin: bin_pause(d, &scheme).unwrap(),
                normalized: normalize_pause(d, &scheme).unwrap(),
            })
            .collect(),
    }
}

pub fn loss_fixtures() -> Vec<String> {
    let mut out = Vec::new();
    let tol = LOSS_TOLERANCE;

    let ex = example(&[(0, 7)], &[]);
    let uniform = HeadPredictions {
        mlm: vec![vec![0.1; 10]],
        ..Default::default()
    };
    expect_close(&mut out, "bert uniform V=10", loss_bert(&uniform, &ex).unwrap().value, 10f64.ln(), tol);
    let mut sure = vec![0.0; 10];
    sure[7] = 1.0;
    let perfect = HeadPredictions {
        mlm: vec![sure],
        ..Default::default()
    };
    expect_close(&mut out, "bert perfect", loss_bert(&perfect, &ex).unwrap().value, 0.0, tol);

    let ex = example(&[(0, 5), (2, 6)], &[]);
    let mut a = vec![0.0; 8];
    a[5] = 0.5;
    a[0] = 0.5;
    let mut b = vec![0.0; 8];
    b[6] = 0.25;
    b[1] = 0.75;
    let two = HeadPredictions {
        mlm: vec![a, b],
        ..Default::default()
    };
    expect_close(&mut out, "bert 0.5/0.25", loss_bert(&two, &ex).unwrap().value, 8f64.ln(), tol);

    let ex = example(&[], &[0.0]);
    let absent = HeadPredictions {
        coarse: vec![[1.0, 0.0]],
        fine: vec![[0.2, 0.3, 0.5]],
        ..Default::default()
    };
    expect_close(&mut out, "hbc absent, sure", loss_hbc(&absent, &ex).unwrap().value, 0.0, tol);

    let ex = example(&[], &[120.0]);
    let present = HeadPredictions {
        coarse: vec![[0.5, 0.5]],
        fine: vec![[0.25, 0.5, 0.25]],
        ..Default::default()
    };
    expect_close(&mut out, "hbc present 0.5/0.5", loss_hbc(&present, &ex).unwrap().value, 4f64.ln(), tol);

    let ex = example(&[], &[0.0, 0.0]);
    let coarse_only = HeadPredictions {
        coarse: vec![[0.8, 0.2], [0.4, 0.6]],
        fine: vec![[1e-30, 1e-30, 1e-30]; 2],
        ..Default::default()
    };
    let want = -(0.8f64.ln() + 0.4f64.ln());
    expect_close(&mut out, "hbc all absent", loss_hbc(&coarse_only, &ex).unwrap().value, want, tol);

    let ex = example(&[], &[2000.0]);
    let exact = HeadPredictions {
        regression: vec![0.2],
        ..Default::default()
    };
    expect_close(&mut out, "nlr exact", loss_nlr(&exact, &ex).unwrap().value, 0.0, tol);
    let off = HeadPredictions {
        regression: vec![0.5],
        ..Default::default()
    };
    expect_close(&mut out, "nlr 0.2 vs 0.5", loss_nlr(&off, &ex).unwrap().value, 0.09, tol);
    out
}

pub fn binning_fixtures() -> Vec<String> {
    let s = BinningScheme::default();
    let mut out = Vec::new();
    let cases = [
        (0.0, PauseBin { present: false, fine: None }),
        (59.0, PauseBin { present: true, fine: Some(FineBin::S) }),
        (60.0, PauseBin { present: true, fine: Some(FineBin::M) }),
        (310.0, PauseBin { present: true, fine: Some(FineBin::M) }),
        (311.0, PauseBin { present: true, fine: Some(FineBin::L) }),
        (10_000.0, PauseBin { present: true, fine: Some(FineBin::L) }),
    ];
    for (d, want) in cases {
        match bin_pause(d, &s) {
            Ok(got) if got == want => {}
            other => out.push(format!("bin_pause({d}): {other:?}, expected {want:?}")),
        }
    }
    for (d, want) in [(0.0, 0.0), (10_000.0, 1.0)] {
        match normalize_pause(d, &s) {
            Ok(got) if got == want => {}
            other => out.push(format!("normalize_pause({d}): {other:?}, expected {want}")),
        }
    }
    expect_close(&mut out, "normalize_pause(55.04)", normalize_pause(55.04, &s).unwrap(), 0.005504, 1e-15);
    out
}

fn tag(s: &str) -> BioTag {
    match s.split_once('-') {
        Some(("B", t)) => BioTag::begin(t),
        Some(("I", t)) => BioTag::inside(t),
        _ => BioTag::outside(),
    }
}

pub fn utterance(id: &str, tags: &[&str]) -> Utterance {
    let tokens = tags.iter().enumerate().map(|(i, t)| Token::new(&format!("w{i}"), 0.0, tag(t))).collect();
    Utterance::new(id, "d", tokens).unwrap()
}

pub fn prediction(id: &str, tags: &[&str]) -> Prediction {
    Prediction {
        id: id.into(),
        labels: tags.iter().map(|t| tag(t)).collect(),
    }
}

fn report(rate: f64) -> EvalReport {
    EvalReport {
        model: None,
        domain: None,
        eer: rate,
        ter: rate,
        uer: rate,
        counts: Counts::default(),
        spans: None,
    }
}

pub fn metrics_fixtures() -> Vec<String> {
    let mut out = Vec::new();
    let opts = EvalOptions::default();
    let gold = [utterance("a", &["O", "B-S", "I-S"]), utterance("b", &["B-X", "O"])];
    let perfect = [prediction("a", &["O", "B-S", "I-S"]), prediction("b", &["B-X", "O"])];
    let r = evaluate(&gold, &perfect, opts).unwrap();
    if (r.eer, r.ter, r.uer) != (0.0, 0.0, 0.0) {
        out.push(format!("perfect predictions: {r:?}"));
    }

    let r = evaluate(&gold[..1], &[prediction("a", &["O", "B-S", "O"])], opts).unwrap();
    expect_close(&mut out, "truncated span EER", r.eer, 1.0, 0.0);
    expect_close(&mut out, "truncated span TER", r.ter, 1.0 / 3.0, 1e-15);
    expect_close(&mut out, "truncated span UER", r.uer, 1.0, 0.0);

    let preds = [prediction("a", &["O", "B-S", "I-S"]), prediction("b", &["B-X", "B-X"])];
    let r = evaluate(&gold, &preds, opts).unwrap();
    expect_close(&mut out, "outside-only error UER", r.uer, 0.0, 0.0);
    expect_close(&mut out, "outside-only error TER", r.ter, 1.0 / 5.0, 1e-15);

    let row = &compare(&report(0.10), &[("V".into(), report(0.09))], "d")[0];
    expect_close(&mut out, "0.10 -> 0.09", row.delta_eer.unwrap(), -10.0, 1e-9);
    let row = &compare(&report(0.10), &[("V".into(), report(0.10))], "d")[0];
    expect_close(&mut out, "unchanged", row.delta_eer.unwrap(), 0.0, 0.0);
    if compare(&report(0.0), &[("V".into(), report(0.1))], "d")[0].delta_eer.is_some() {
        out.push("zero baseline should give an undefined delta".into());
    }
    out.extend(table2_fixture());
    out
}

/// Published relative changes (model, domain, EER, TER, UER).
pub const TABLE2: [(&str, &str, [f64; 3]); 6] = [
    ("HBC", "Music", [0.47, 0.22, -2.34]),
    ("HBC", "Movies", [-2.83, -2.78, -0.57]),
    ("HBC", "Sports", [0.70, 0.71, -1.12]),
    ("NLR", "Music", [-2.94, -3.32, -4.10]),
    ("NLR", "Movies", [-8.32, -8.51, -3.99]),
    ("NLR", "Sports", [-2.63, -2.67, -3.22]),
];

/// Feeds rates implied by the published changes through `compare` and the
/// renderer; every cell must come back as printed and NLR must hold every
/// best mark.
pub fn table2_fixture() -> Vec<String> {
    let mut out = Vec::new();
    let base = EvalReport {
        eer: 0.2,
        ter: 0.05,
        uer: 0.3,
        ..report(0.0)
    };
    let mut rows = Vec::new();
    for (model, domain, d) in TABLE2 {
        let variant = EvalReport {
            eer: base.eer * (1.0 + d[0] / 100.0),
            ter: base.ter * (1.0 + d[1] / 100.0),
            uer: base.uer * (1.0 + d[2] / 100.0),
            ..report(0.0)
        };
        rows.extend(compare(&base, &[(model.to_owned(), variant)], domain));
    }
    let mut ordered = Vec::new();
    for m in ["HBC", "NLR"] {
        ordered.extend(rows.iter().filter(|r| r.model == m).cloned());
    }
    let rendered = render_comparison(&ordered);
    let lines: Vec<&str> = rendered.text.lines().skip(2).collect();
    for ((model, domain, d), line) in TABLE2.iter().zip(&lines) {
        let cells: Vec<String> = d
            .iter()
            .map(|v| {
                let c = format!("{v:+.2}%");
                if *model == "NLR" {
                    format!("**{c}**")
                } else {
                    c
                }
            })
            .collect();
        let mut expected = cells.join("  ");
        expected = format!("{domain}  {expected}");
        let squashed: String = line.split_whitespace().collect::<Vec<_>>().join("  ");
        if !squashed.ends_with(&expected) {
            out.push(format!("{model}/{domain}: rendered {line:?}, expected cells {expected:?}"));
        }
    }
    if lines.len() != TABLE2.len() {
        out.push(format!("expected {} rows, got {}", TABLE2.len(), lines.len()));
    }
    if rendered.text.matches("**").count() != 2 * 9 {
        out.push("best marks should fall on the nine NLR cells".into());
    }
    if !lines[0].starts_with("HBC") || !lines[3].starts_with("NLR") {
        out.push("model label should appear once per block".into());
    }
    out
}
