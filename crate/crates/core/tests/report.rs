use flowinv::binning::make_bins;
use flowinv::report::{compare, emit_plot_data, read_plot_data, ReportMetadata};
use flowinv::{FlowTableConfig, Method, SamplerConfig};
use proptest::prelude::*;

fn masses(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 1..=max)
        .prop_filter("needs mass", |v| v.iter().sum::<f64>() > 1e-6)
}

proptest! {
    #[test]
    fn compare_is_symmetric(a in masses(300), b in masses(300)) {
        let bins = make_bins(a.len().max(b.len()) as u64, 1.3).unwrap();
        let ab = compare(&a, &b, &bins).unwrap();
        let ba = compare(&b, &a, &bins).unwrap();
        prop_assert_eq!(ab.total_variation, ba.total_variation);
        prop_assert_eq!(ab.ccdf_max_gap, ba.ccdf_max_gap);
        prop_assert!((0.0..=1.0).contains(&ab.total_variation));
        prop_assert!((0.0..=1.0).contains(&ab.ccdf_max_gap));
        prop_assert_eq!(ab.rows.len(), bins.len() - 1);
    }

    #[test]
    fn self_comparison_is_zero(a in masses(300)) {
        let bins = make_bins(a.len() as u64, 1.5).unwrap();
        let r = compare(&a, &a, &bins).unwrap();
        prop_assert_eq!(r.total_variation, 0.0);
        prop_assert_eq!(r.ccdf_max_gap, 0.0);
    }

    #[test]
    fn plot_data_round_trips(
        a in masses(100),
        b in prop::collection::vec(-0.2f64..1.0, 1..=100),
        sampled in masses(100),
        seed in any::<u64>(),
        packets in any::<u64>(),
    ) {
        prop_assume!(b.iter().map(|v| v.max(0.0)).sum::<f64>() > 1e-6);
        let bins = make_bins(a.len().max(b.len()).max(sampled.len()) as u64, 1.25).unwrap();
        let report = compare(&a, &b, &bins)
            .unwrap()
            .with_sampled(&sampled)
            .unwrap()
            .with_metadata(ReportMetadata {
                sampler: Some(SamplerConfig::new(Method::ShByte, 1e-5, seed).unwrap()),
                flow_table: Some(FlowTableConfig::new(2.0, 300.0, 1 << 20).unwrap()),
                packets_sampled: Some(packets),
                flows_formed: None,
                mean_flow_length: Some(a.len() as f64 / 3.0),
            });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        emit_plot_data(&report, &path).unwrap();
        prop_assert_eq!(read_plot_data(&path).unwrap(), report);
    }
}
