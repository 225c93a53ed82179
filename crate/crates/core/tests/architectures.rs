//! Parameter counts of the published architectures, layer by layer.

use userprof::domain::{build_domain_model, DomainDims, DomainVariant};
use userprof::nn::NetworkSpec;

fn per_layer(spec: &NetworkSpec) -> Vec<usize> {
    spec.summary().unwrap().iter().map(|row| row.params).collect()
}

fn table_spec(variant: DomainVariant) -> NetworkSpec {
    build_domain_model(variant, &DomainDims::table_faithful()).unwrap()
}

#[test]
fn ann_matches_layer_table() {
    let spec = table_spec(DomainVariant::M1Ann);
    assert_eq!(per_layer(&spec), [320000, 0, 8450, 9170, 426]);
    assert_eq!(spec.param_count(), 338046);
}

#[test]
fn bilstm_matches_layer_table() {
    let spec = table_spec(DomainVariant::M2Lstm);
    assert_eq!(per_layer(&spec), [320000, 66048, 16512, 8256, 390]);
    assert_eq!(spec.param_count(), 411206);
}

#[test]
fn bilstm_dropout_rows_and_restored_output() {
    let spec = table_spec(DomainVariant::M2LstmDropout);
    let rows = per_layer(&spec);
    // the listed rows, then the output layer the table omits
    assert_eq!(rows, [320000, 66048, 16512, 0, 8256, 390]);
    assert_eq!(rows[..5].iter().sum::<usize>(), 410816);
    assert_eq!(spec.param_count(), 411206);
}

#[test]
fn cnn_matches_layer_table() {
    let spec = table_spec(DomainVariant::M3Cnn);
    assert_eq!(per_layer(&spec), [320000, 41088, 0, 8256, 390]);
    assert_eq!(spec.param_count(), 369734);
}

#[test]
fn output_shapes_follow_the_tables() {
    let m1 = table_spec(DomainVariant::M1Ann);
    let shapes: Vec<Vec<usize>> = m1.summary().unwrap().into_iter().map(|r| r.output_shape).collect();
    assert_eq!(shapes, vec![vec![200, 64], vec![64], vec![130], vec![70], vec![6]]);

    let m3 = table_spec(DomainVariant::M3Cnn);
    let shapes: Vec<Vec<usize>> = m3.summary().unwrap().into_iter().map(|r| r.output_shape).collect();
    assert_eq!(shapes, vec![vec![200, 64], vec![200, 128], vec![128], vec![64], vec![6]]);
}

#[test]
fn production_width_only_changes_the_output_layer() {
    for v in DomainVariant::ALL {
        let faithful = table_spec(v);
        let prod = build_domain_model(v, &DomainDims::default()).unwrap();
        let (a, b) = (per_layer(&faithful), per_layer(&prod));
        assert_eq!(a[..a.len() - 1], b[..b.len() - 1]);
        let last_in = match v {
            DomainVariant::M1Ann => 70,
            _ => 64,
        };
        assert_eq!(a.last().unwrap() - b.last().unwrap(), last_in + 1);
    }
}
