use fresnel_loc::fresnel::{LinkGeometry, Point2D, SubcarrierSet};
use fresnel_loc::io::*;
use fresnel_loc::locate::LocationEstimate;
use fresnel_loc::phase::PhaseOffsetMatrix;
use fresnel_loc::sim::{CsiSeries, Trajectory};
use proptest::prelude::*;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        ..ProptestConfig::default()
    }
}

fn arb_subcarriers() -> impl Strategy<Value = SubcarrierSet> {
    (2.0e9f64..6.0e9, 1.0e5f64..5.0e6, 2usize..12)
        .prop_map(|(f, s, k)| SubcarrierSet::new(f, s, k).unwrap())
}

fn arb_series() -> impl Strategy<Value = CsiSeries> {
    (
        arb_subcarriers(),
        1usize..40,
        50.0f64..2000.0,
        -100.0f64..100.0,
        (-10.0f64..10.0, -10.0f64..10.0, 0.5f64..10.0),
        any::<u64>(),
    )
        .prop_map(|(subs, n, fs, t0, (x, y, d), seed)| {
            let mut state = seed | 1;
            let mut next = move || {
                // xorshift keeps the strategy cheap
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            let rows = (0..subs.count())
                .map(|_| (0..n).map(|_| 3.0 * next()).collect())
                .collect();
            let link = LinkGeometry::new(Point2D::new(x, y), Point2D::new(x + d, y)).unwrap();
            CsiSeries::new(fs, t0, rows, subs, link).unwrap()
        })
}

fn arb_truth() -> impl Strategy<Value = Option<Trajectory>> {
    proptest::option::of(
        proptest::collection::vec((0.001f64..0.5, -20.0f64..20.0, -20.0f64..20.0), 2..20).prop_map(|steps| {
            let mut t = 0.0;
            let samples = steps
                .into_iter()
                .map(|(dt, x, y)| {
                    t += dt;
                    (t, Point2D::new(x, y))
                })
                .collect();
            Trajectory::new(samples).unwrap()
        }),
    )
}

fn write(trace: &TraceFile) -> Vec<u8> {
    let mut out = Vec::new();
    write_trace(trace, &mut out).unwrap();
    out
}

proptest! {
    #![proptest_config(cases(200))]

    #[test]
    fn traces_round_trip(
        series in arb_series(),
        truth in arb_truth(),
        text in any::<bool>(),
        multipath in any::<bool>(),
    ) {
        let trace = TraceFile {
            series,
            truth,
            environment: if multipath { Environment::Multipath } else { Environment::FreeSpace },
            encoding: if text { Encoding::Text } else { Encoding::F32Le },
        };
        let first = write(&trace);
        let back = read_trace(first.as_slice()).unwrap();
        prop_assert_eq!(&back.truth, &trace.truth);
        prop_assert_eq!(back.environment, trace.environment);
        prop_assert_eq!(back.encoding, trace.encoding);
        prop_assert_eq!(back.series.link(), trace.series.link());
        prop_assert_eq!(back.series.subcarriers(), trace.series.subcarriers());
        prop_assert_eq!(back.series.sample_rate(), trace.series.sample_rate());
        prop_assert_eq!(back.series.start_time(), trace.series.start_time());
        for (a, b) in back.series.rows().iter().zip(trace.series.rows()) {
            for (x, y) in a.iter().zip(b) {
                prop_assert_eq!(*x as f32, *y as f32);
            }
        }
        prop_assert_eq!(write(&back), first);
    }

    #[test]
    fn calibration_round_trips(subs in arb_subcarriers(), eps in proptest::collection::vec(-10.0f64..10.0, 12)) {
        let m = PhaseOffsetMatrix::from_subcarrier_offsets(&eps[..subs.count()], &subs);
        let mut out = Vec::new();
        write_calibration(&m, &mut out).unwrap();
        let back = read_calibration(out.as_slice()).unwrap();
        prop_assert_eq!(&back, &m);
        let mut again = Vec::new();
        write_calibration(&back, &mut again).unwrap();
        prop_assert_eq!(again, out);
    }

    #[test]
    fn estimates_round_trip(
        rows in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e4f64..1e4, 0.0f64..10.0, 2usize..9), 0..50),
    ) {
        let est: Vec<LocationEstimate> = rows
            .into_iter()
            .map(|(x, y, t, r, n)| LocationEstimate {
                position: Point2D::new(x, y),
                time: t,
                residual: r,
                contributing_links: n,
            })
            .collect();
        let mut out = Vec::new();
        write_estimates(&est, &mut out).unwrap();
        let back = read_estimates(out.as_slice()).unwrap();
        prop_assert_eq!(&back, &est);
        let mut again = Vec::new();
        write_estimates(&back, &mut again).unwrap();
        prop_assert_eq!(again, out);
    }

    #[test]
    fn truncated_binary_body_is_rejected(series in arb_series(), cut in 1usize..8) {
        let trace = TraceFile { series, truth: None, environment: Environment::FreeSpace, encoding: Encoding::F32Le };
        let mut bytes = write(&trace);
        bytes.truncate(bytes.len() - cut.min(bytes.len()));
        prop_assert!(read_trace(bytes.as_slice()).is_err());
    }
}

/// Every property above, for runners that report them as one group.
#[allow(dead_code)]
pub fn suite() -> Vec<(&'static str, fn())> {
    vec![
        ("traces_round_trip", traces_round_trip),
        ("calibration_round_trips", calibration_round_trips),
        ("estimates_round_trip", estimates_round_trip),
        ("truncated_binary_body_is_rejected", truncated_binary_body_is_rejected),
    ]
}
