use rand::Rng;

use cwl_core::rng::seeded_rng;
use cwl_core::signals::{ChannelStream, EventSchedule, Label, LabeledInterval, MultimodalRecording};
use cwl_core::study::{
    average_epoch_averages, canonical_pairs, epoch_average, grand_average, read_surgtlx_csv,
    surgtlx_score, task_summary_stats, write_hemo_summary_csv, write_surgtlx_scores_csv, Modality,
    PairChoice, StudyError, SurgTlxResponse,
};
use cwl_core::synth::{generate_session, Hrf, SynthConfig};

fn response(ratings: [f64; 6], pick_higher: bool) -> SurgTlxResponse {
    let pairwise = canonical_pairs()
        .iter()
        .map(|&(a, b)| PairChoice { a, b, winner: if pick_higher { b } else { a } })
        .collect();
    SurgTlxResponse { ratings, pairwise }
}

#[test]
fn canonical_pair_list_covers_every_pair_once() {
    let pairs = canonical_pairs();
    assert_eq!(pairs.len(), 15);
    for (i, &(a, b)) in pairs.iter().enumerate() {
        assert!(a < b && b < 6);
        for &(c, d) in &pairs[..i] {
            assert_ne!((a, b), (c, d));
        }
    }
}

#[test]
fn weights_sum_to_fifteen_and_scores_stay_in_range() {
    let mut rng = seeded_rng(21);
    for _ in 0..200 {
        let mut ratings = [0.0; 6];
        for r in &mut ratings {
            *r = rng.random_range(0.0..=20.0);
        }
        let pairwise = canonical_pairs()
            .iter()
            .map(|&(a, b)| PairChoice { a, b, winner: if rng.random_bool(0.5) { a } else { b } })
            .collect();
        let s = surgtlx_score(&SurgTlxResponse { ratings, pairwise }).unwrap();
        assert_eq!(s.weights.iter().sum::<u32>(), 15);
        assert!((0.0..=20.0).contains(&s.weighted_score));
    }
}

#[test]
fn equal_ratings_return_the_rating_exactly() {
    let s = surgtlx_score(&response([10.0; 6], false)).unwrap();
    assert_eq!(s.weighted_score, 10.0);
    assert_eq!(s.raw_mean, 10.0);
}

#[test]
fn dominant_dimension_hand_case() {
    // dimension 0 wins all five of its pairs; every other pair goes to the
    // lower index
    let pairwise = canonical_pairs()
        .iter()
        .map(|&(a, b)| PairChoice { a, b, winner: a })
        .collect();
    let mut ratings = [0.0; 6];
    ratings[0] = 20.0;
    let s = surgtlx_score(&SurgTlxResponse { ratings, pairwise }).unwrap();
    assert_eq!(s.weights[0], 5);
    assert!((s.weighted_score - 20.0 * 5.0 / 15.0).abs() < 1e-12);
    assert!((s.raw_mean - 20.0 / 6.0).abs() < 1e-12);
}

#[test]
fn constant_rating_shift_moves_the_score_by_that_constant() {
    let mut rng = seeded_rng(4);
    for _ in 0..50 {
        let mut ratings = [0.0; 6];
        for r in &mut ratings {
            *r = rng.random_range(0.0..=16.0);
        }
        let pairwise: Vec<PairChoice> = canonical_pairs()
            .iter()
            .map(|&(a, b)| PairChoice { a, b, winner: if rng.random_bool(0.5) { a } else { b } })
            .collect();
        let base = surgtlx_score(&SurgTlxResponse { ratings, pairwise: pairwise.clone() }).unwrap();
        let mut shifted = ratings;
        for r in &mut shifted {
            *r += 3.25;
        }
        let moved = surgtlx_score(&SurgTlxResponse { ratings: shifted, pairwise }).unwrap();
        assert_eq!(moved.weights, base.weights);
        assert!((moved.weighted_score - base.weighted_score - 3.25).abs() < 1e-12);
    }
}

#[test]
fn malformed_responses_are_rejected() {
    let mut fourteen = response([5.0; 6], false);
    fourteen.pairwise.pop();
    assert!(matches!(surgtlx_score(&fourteen), Err(StudyError::MissingPair(_, _))));

    let mut dup = response([5.0; 6], false);
    dup.pairwise[1] = dup.pairwise[0];
    assert!(matches!(surgtlx_score(&dup), Err(StudyError::DuplicatePair(0, 1))));

    let mut low = response([5.0; 6], false);
    low.ratings[2] = -0.5;
    assert!(matches!(surgtlx_score(&low), Err(StudyError::RatingOutOfRange { dim: 2, .. })));
    let mut high = response([5.0; 6], false);
    high.ratings[5] = 20.5;
    assert!(matches!(surgtlx_score(&high), Err(StudyError::RatingOutOfRange { dim: 5, .. })));

    let mut outsider = response([5.0; 6], false);
    outsider.pairwise[0].winner = 5;
    assert!(matches!(surgtlx_score(&outsider), Err(StudyError::BadPair(_))));
    let mut degenerate = response([5.0; 6], false);
    degenerate.pairwise[0] = PairChoice { a: 3, b: 3, winner: 3 };
    assert!(matches!(surgtlx_score(&degenerate), Err(StudyError::BadPair(_))));
}

/// 4 task blocks of 10 s separated by 10 s rests at 10 Hz, with fNIRS
/// channels filled by `f(channel, sample_index)`.
fn tiny_rec(n_fnirs: usize, f: impl Fn(usize, usize) -> f64) -> MultimodalRecording {
    let fs = 10.0;
    let total_s = 90.0;
    let n = (total_s * fs) as usize;
    let mut intervals = Vec::new();
    for (k, label) in Label::TASKS.iter().enumerate() {
        let start = 10.0 + 20.0 * k as f64;
        intervals.push(LabeledInterval { label: Label::NoTask, start_s: start - 10.0, end_s: start });
        intervals.push(LabeledInterval { label: *label, start_s: start, end_s: start + 10.0 });
    }
    intervals.push(LabeledInterval { label: Label::NoTask, start_s: 80.0, end_s: 90.0 });
    let mk = |name: String, data: Vec<f64>| ChannelStream::new(name, fs, data);
    MultimodalRecording {
        subject_id: "t".into(),
        eeg: vec![mk("eeg0".into(), vec![0.0; n])],
        fnirs_hbo2: (0..n_fnirs)
            .map(|c| mk(format!("hbo2_{c}"), (0..n).map(|i| f(c, i)).collect()))
            .collect(),
        fnirs_hbr: (0..n_fnirs)
            .map(|c| mk(format!("hbr_{c}"), (0..n).map(|i| -0.5 * f(c, i)).collect()))
            .collect(),
        pupil: vec![mk("left".into(), vec![3.0; n]), mk("right".into(), vec![3.0; n])],
        events: EventSchedule::new(intervals).unwrap(),
    }
}

#[test]
fn constant_channel_averages_to_exact_zero() {
    let rec = tiny_rec(3, |c, _| 2.0 + c as f64);
    let ea = epoch_average(&rec, 2.0, 5.0).unwrap();
    assert_eq!(ea.n_samples, 70);
    assert_eq!(ea.onset_sample, 20);
    assert_eq!(ea.epochs_used, [1; 4]);
    assert_eq!(ea.epochs_dropped, [0; 4]);
    for t in 0..4 {
        for course in ea.hbo2[t].iter().chain(&ea.hbr[t]) {
            assert_eq!(course.len(), 70);
            assert!(course.iter().all(|&v| v == 0.0), "constant input must cancel exactly");
        }
    }
    // degenerate stats follow
    for s in task_summary_stats(&ea) {
        assert_eq!((s.mean, s.peak, s.time_to_peak_s), (0.0, 0.0, 0.0));
    }
}

#[test]
fn identical_epochs_average_to_either_epoch() {
    // signal is periodic with the 20 s block period, so all four epochs are
    // identical; running one task's average against another's must agree
    let period = 200;
    let rec = tiny_rec(1, |_, i| ((i % period) as f64 * 0.17).sin());
    let ea = epoch_average(&rec, 2.0, 5.0).unwrap();
    for t in 1..4 {
        assert_eq!(ea.hbo2[0][0], ea.hbo2[t][0]);
    }
    // and the average IS the single corrected epoch (used count is 1 each)
    let onset = 100;
    let seg: Vec<f64> = (onset - 20..onset + 50).map(|i| ((i % period) as f64 * 0.17).sin()).collect();
    let baseline: f64 = seg[..20].iter().sum::<f64>() / 20.0;
    for (a, b) in ea.hbo2[0][0].iter().zip(&seg) {
        assert_eq!(*a, b - baseline);
    }
}

#[test]
fn epoch_averaging_is_linear_in_the_signal() {
    let base = tiny_rec(2, |c, i| ((i as f64 * 0.07) + c as f64).sin() * 0.8);
    let mut scaled = base.clone();
    for ch in scaled.fnirs_hbo2.iter_mut().chain(scaled.fnirs_hbr.iter_mut()) {
        for v in &mut ch.samples {
            *v *= 2.5;
        }
    }
    let ea = epoch_average(&base, 2.0, 5.0).unwrap();
    let eb = epoch_average(&scaled, 2.0, 5.0).unwrap();
    for t in 0..4 {
        for (ca, cb) in ea.hbo2[t].iter().zip(&eb.hbo2[t]) {
            for (a, b) in ca.iter().zip(cb) {
                assert!((b - 2.5 * a).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn out_of_bounds_epochs_are_dropped_and_counted() {
    // pre window of 15 s reaches before t=0 for the first task onset (10 s)
    let rec = tiny_rec(1, |_, i| i as f64);
    let err = epoch_average(&rec, 15.0, 5.0);
    assert!(matches!(err, Err(StudyError::NoEpochs(Label::Task1))));

    // post window crossing the recording end drops the last task instead
    let err = epoch_average(&rec, 2.0, 25.0);
    assert!(matches!(err, Err(StudyError::NoEpochs(Label::Task4))));
}

#[test]
fn epoch_window_validation() {
    let rec = tiny_rec(1, |_, _| 0.0);
    assert!(matches!(epoch_average(&rec, -1.0, 5.0), Err(StudyError::InvalidWindow(_))));
    assert!(matches!(epoch_average(&rec, 0.0, 0.0), Err(StudyError::InvalidWindow(_))));
    let empty_events = MultimodalRecording {
        events: EventSchedule::new(vec![]).unwrap(),
        ..tiny_rec(1, |_, _| 0.0)
    };
    assert!(matches!(epoch_average(&empty_events, 2.0, 5.0), Err(StudyError::InvalidWindow(_))));
}

#[test]
fn injected_response_is_recovered_from_a_synthetic_session() {
    let cfg = SynthConfig::default();
    let (rec, _) = generate_session(&cfg).unwrap();
    let ea = epoch_average(&rec, 5.0, 30.0).unwrap();

    // the generator's cumulative response curve peaks at a known amplitude
    // fraction and latency
    let hrf = Hrf::default();
    let table = hrf.cumulative_table(0.01, 40.0);
    let (mut frac, mut lat) = (0.0f64, 0.0);
    for (i, &v) in table.iter().enumerate() {
        if v > frac {
            frac = v;
            lat = i as f64 * 0.01;
        }
    }

    for (t, expected_amp) in [(1, cfg.task_effects[1].hbo2_amp), (3, cfg.task_effects[3].hbo2_amp)] {
        let course = ea.channel_mean(Modality::HbO2, t);
        let (mut peak, mut at) = (0.0f64, 0);
        for (i, &v) in course[ea.onset_sample..].iter().enumerate() {
            if v > peak {
                peak = v;
                at = i;
            }
        }
        let injected = expected_amp * frac;
        assert!(
            (peak - injected).abs() <= 0.1 * injected,
            "task {t}: peak {peak:.3} vs injected {injected:.3}"
        );
        let latency = at as f64 / ea.fs_hz;
        assert!((latency - lat).abs() <= 1.0, "task {t}: latency {latency:.2} vs {lat:.2}");
    }

    // configured contrast: Task2 and Task4 responses dominate Task1/Task3
    let peaks: Vec<f64> = (0..4)
        .map(|t| {
            let c = ea.channel_mean(Modality::HbO2, t);
            c[ea.onset_sample..].iter().cloned().fold(0.0, f64::max)
        })
        .collect();
    assert!(peaks[1].min(peaks[3]) > peaks[0].max(peaks[2]), "peaks {peaks:?}");

    // summary rows carry the same ordering through per-channel peaks
    let stats = task_summary_stats(&ea);
    let mean_peak = |task: Label| {
        let vals: Vec<f64> = stats
            .iter()
            .filter(|s| s.task == task && s.modality == Modality::HbO2)
            .map(|s| s.peak)
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    assert!(
        mean_peak(Label::Task2).min(mean_peak(Label::Task4))
            > mean_peak(Label::Task1).max(mean_peak(Label::Task3))
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hemo_summary.csv");
    write_hemo_summary_csv(&path, &stats).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 2 * rec.fnirs_hbo2.len());
    assert!(text.starts_with("task,channel,modality,mean,peak,time_to_peak_s\n"));
}

#[test]
fn cross_recording_average_pools_channels_elementwise() {
    let a = epoch_average(&tiny_rec(2, |c, i| (c + i) as f64 % 7.0), 2.0, 5.0).unwrap();
    let b = epoch_average(&tiny_rec(2, |c, i| ((c * i) as f64 * 0.01).cos()), 2.0, 5.0).unwrap();

    let same = average_epoch_averages(std::slice::from_ref(&a)).unwrap();
    assert_eq!(same.hbo2, a.hbo2);
    assert_eq!(same.epochs_used, a.epochs_used);

    let pooled = average_epoch_averages(&[a.clone(), b.clone()]).unwrap();
    assert_eq!(pooled.epochs_used, [2; 4]);
    for t in 0..4 {
        for c in 0..2 {
            for (i, v) in pooled.hbo2[t][c].iter().enumerate() {
                let want = (a.hbo2[t][c][i] + b.hbo2[t][c][i]) / 2.0;
                assert!((v - want).abs() < 1e-15);
            }
        }
    }

    let narrow = epoch_average(&tiny_rec(2, |_, _| 0.0), 2.0, 4.0).unwrap();
    assert!(matches!(
        average_epoch_averages(&[a, narrow]),
        Err(StudyError::InvalidWindow(_))
    ));
    assert!(matches!(average_epoch_averages(&[]), Err(StudyError::InvalidWindow(_))));
}

#[test]
fn grand_average_of_one_recording_is_its_channel_mean() {
    let rec = tiny_rec(3, |c, i| ((i + c) as f64 * 0.11).sin());
    let ea = epoch_average(&rec, 2.0, 5.0).unwrap();
    let g = grand_average(std::slice::from_ref(&ea), Modality::HbO2).unwrap();
    for t in 0..4 {
        assert_eq!(g[t], ea.channel_mean(Modality::HbO2, t));
    }
    assert!(matches!(grand_average(&[], Modality::HbO2), Err(StudyError::InvalidWindow(_))));
}

#[test]
fn surgtlx_csv_roundtrip_and_row_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("surgtlx.csv");
    let pairs = canonical_pairs();
    let cells: Vec<String> = pairs.iter().map(|&(a, b)| format!("{a}>{b}")).collect();
    let mut text = String::from("participant,task,m,p,t,c,s,d,");
    text.push_str(&(1..=15).map(|i| format!("p{i}")).collect::<Vec<_>>().join(","));
    text.push('\n');
    text.push_str(&format!("s01,Task1,10,10,10,10,10,10,{}\n", cells.join(",")));
    text.push_str(&format!("s01,Task2,1,2,3,4,5,6,{}\n", cells.join(",")));
    std::fs::write(&path, &text).unwrap();

    let rows = read_surgtlx_csv(&path).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].task, Label::Task1);
    let s = surgtlx_score(&rows[0].response).unwrap();
    assert_eq!(s.weighted_score, 10.0);

    let out = dir.path().join("scores.csv");
    write_surgtlx_scores_csv(&out, &rows).unwrap();
    let written = std::fs::read_to_string(&out).unwrap();
    assert_eq!(written.lines().count(), 3);
    assert!(written.lines().nth(1).unwrap().starts_with("s01,Task1,10,"));

    // a duplicated pair cell must be reported with its row number
    let mut bad_cells = cells.clone();
    bad_cells[1] = bad_cells[0].clone();
    let bad = format!(
        "participant,task,m,p,t,c,s,d,{}\ns02,Task3,5,5,5,5,5,5,{}\n",
        (1..=15).map(|i| format!("p{i}")).collect::<Vec<_>>().join(","),
        bad_cells.join(",")
    );
    std::fs::write(&path, bad).unwrap();
    match read_surgtlx_csv(&path) {
        Err(StudyError::InRow { row, source }) => {
            assert_eq!(row, 2);
            assert!(matches!(*source, StudyError::DuplicatePair(0, 1)));
        }
        other => panic!("expected row error, got {other:?}"),
    }
}
