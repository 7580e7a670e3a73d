mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;

use notecast_core::logicflow::build_logic_flow;
use notecast_core::logicflow::names::analyze_cell_names;
use support::*;

fn edge_set(sources: &[String]) -> BTreeSet<(usize, usize, String)> {
    build_logic_flow(&code_notebook(sources), None)
        .edges
        .into_iter()
        .map(|e| (e.from, e.to, e.name))
        .collect()
}

#[test]
fn three_cell_chain_matches_oracle() {
    let program = vec![
        vec![Stmt::Assign {
            target: 0,
            uses: vec![],
        }],
        vec![Stmt::Assign {
            target: 1,
            uses: vec![0],
        }],
        vec![Stmt::Print { uses: vec![1] }],
    ];
    let want: BTreeSet<_> = [(0, 1, "a".to_string()), (1, 2, "b".to_string())].into();
    assert_eq!(oracle_edges(&program), want);
    let sources: Vec<String> = program.iter().map(|c| render_cell(c)).collect();
    assert_eq!(edge_set(&sources), want);
}

#[test]
fn self_update_reads_the_earlier_binding() {
    let sources = vec!["a = 1".to_string(), "a = a + 1\nb = a".to_string()];
    let want: BTreeSet<_> = [(0, 1, "a".to_string())].into();
    assert_eq!(edge_set(&sources), want);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn edges_equal_binding_replay(program in arb_program()) {
        let sources: Vec<String> = program.iter().map(|c| render_cell(c)).collect();
        prop_assert_eq!(edge_set(&sources), oracle_edges(&program));
    }

    #[test]
    fn edges_point_forward(program in arb_program()) {
        let sources: Vec<String> = program.iter().map(|c| render_cell(c)).collect();
        let flow = build_logic_flow(&code_notebook(&sources), None);
        for e in &flow.edges {
            prop_assert!(e.from < e.to);
            prop_assert!(flow.node(e.from).unwrap().outputs.contains(&e.name));
            prop_assert!(flow.node(e.to).unwrap().inputs.contains(&e.name));
        }
    }

    #[test]
    fn hiding_keeps_edges(program in arb_program(), pick in any::<prop::sample::Index>()) {
        let sources: Vec<String> = program.iter().map(|c| render_cell(c)).collect();
        let flow = build_logic_flow(&code_notebook(&sources), None);
        let node = pick.index(flow.nodes.len());
        let hidden = flow.set_hidden(node, true).unwrap();
        prop_assert_eq!(&hidden.edges, &flow.edges);
        prop_assert!(!hidden.scene_order().contains(&node));
        prop_assert_eq!(hidden.scene_order().len() + 1, flow.scene_order().len());
    }

    #[test]
    fn name_analysis_is_pure(program in arb_program()) {
        for cell in &program {
            let src = render_cell(cell);
            prop_assert_eq!(analyze_cell_names(&src), analyze_cell_names(&src));
        }
    }
}
