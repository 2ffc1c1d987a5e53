use std::collections::{BTreeMap, HashMap};

use benchcut_core::analysis::{analyze_cells, AnalysisOptions, CellAnalysis};
use benchcut_core::corpus::{Corpus, Domain, PromptRecord};
use benchcut_core::endpoint::{EmbeddingClient, EndpointConfig, Restriction};
use benchcut_core::mock::{MockReply, MockServer};
use benchcut_core::quality::score_store;
use benchcut_core::report::{
    emit_scatter, render_outlier_table, render_summary_table, PlotSpec, TableFormat,
};
use benchcut_core::runner::{load_runs, run_grid, ExperimentCell, GridOptions, RunStore};

fn corpus(domain: &str, n: usize) -> Corpus {
    let records = (0..n)
        .map(|i| PromptRecord {
            id: format!("{domain}-{i}"),
            domain: Domain::from(domain),
            text: format!("describe case {i} for {domain}"),
            reference: Some(format!("case {i} described for {domain}")),
        })
        .collect();
    Corpus::from_records(records, "memory").unwrap()
}

#[test]
fn run_score_analyze_render() {
    let server = MockServer::start(|req| {
        let i: u64 = req
            .prompt
            .split_whitespace()
            .nth(2)
            .and_then(|w| w.parse().ok())
            .unwrap_or(0);
        let words = 4 + 3 * i as usize;
        MockReply::text(format!("case {i} {}", vec!["detail"; words].join(" "))).delay_ms(3 + 3 * i)
    });
    let mut per_domain = BTreeMap::new();
    per_domain.insert(Domain::Finance, corpus("finance", 6));
    per_domain.insert(Domain::Medical, corpus("medical", 6));
    let endpoint = EndpointConfig::new(server.url(), "mock");
    let cells: Vec<ExperimentCell> = [Restriction::approx_words(50), Restriction::unlimited()]
        .into_iter()
        .flat_map(|r| {
            let endpoint = endpoint.clone();
            per_domain.keys().map(move |d| ExperimentCell {
                model_label: "m".into(),
                endpoint: endpoint.clone(),
                domain: d.clone(),
                restriction: r.clone(),
            })
        })
        .collect();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.jsonl");
    let mut store = RunStore::open(&path).unwrap();
    let report = run_grid(
        &cells,
        &per_domain,
        None,
        &mut store,
        &GridOptions::default(),
    )
    .unwrap();
    assert!(report.is_clean());
    assert_eq!(report.records_appended, 24);
    let runs = load_runs(&path).unwrap();
    assert_eq!(runs, store.records());

    let references: HashMap<String, String> = per_domain
        .values()
        .flat_map(|c| {
            c.records()
                .iter()
                .map(|r| (r.id.clone(), r.reference.clone().unwrap()))
        })
        .collect();
    let embedder = EmbeddingClient::new(EndpointConfig::new(server.url(), "embed")).unwrap();
    let scored = score_store(&runs, &references, &embedder, 3);
    assert!(scored.failures.is_empty());
    assert_eq!(scored.scores.len(), 24);
    // repeated texts come from the cache
    assert!(server.embedding_requests() < 48);

    let cells = analyze_cells(&runs, &scored.scores, &AnalysisOptions::default());
    assert_eq!(cells.len(), 4);
    for c in &cells {
        assert!(c.is_ok(), "{}: {:?}", c.cell_key, c.error);
        let back: CellAnalysis = serde_json::from_str(&serde_json::to_string(c).unwrap()).unwrap();
        assert_eq!(&back, c);
        assert_eq!(c.summary.as_ref().unwrap().n_scored, 6);
    }

    let summaries: Vec<_> = cells.iter().map(|c| c.summary.clone().unwrap()).collect();
    let outliers: Vec<_> = cells.iter().map(|c| c.outliers.clone().unwrap()).collect();
    let md = render_summary_table(&summaries, TableFormat::Markdown).unwrap();
    assert_eq!(md.lines().count(), 6);
    assert!(md.contains("| m | finance | ≈50 |") && md.contains("| m | medical | ∞ |"));
    let csv = render_outlier_table(&outliers, TableFormat::Csv).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let plots = dir.path().join("plots");
    for c in &cells {
        let files = emit_scatter(&PlotSpec::from_analysis(c).unwrap(), &plots).unwrap();
        let svg = std::fs::read_to_string(files.svg).unwrap();
        roxmltree::Document::parse(&svg).unwrap();
    }
    assert_eq!(std::fs::read_dir(&plots).unwrap().count(), 8);
}

/// Markdown and CSV renderings carry the same numbers.
#[test]
fn markdown_and_csv_agree() {
    let runs: Vec<_> = (0..8)
        .map(|i| benchcut_core::runner::RunRecord {
            cell_key: "m/common/50".into(),
            prompt_id: format!("p{i}"),
            prompt_word_len: 4 + i,
            response_word_len: 10 + 5 * i,
            response_text: vec!["w"; 10 + 5 * i].join(" "),
            inference_time_s: 0.4 + 0.21 * i as f64,
            gpu_mem_peak_mb: Some(2766),
            gpu_mem_pct: Some(4.43),
            started_at: chrono::Utc::now(),
        })
        .collect();
    let cells = analyze_cells(&runs, &[], &AnalysisOptions::default());
    let rows = vec![cells[0].summary.clone().unwrap()];
    let md = render_summary_table(&rows, TableFormat::Markdown).unwrap();
    let csv = render_summary_table(&rows, TableFormat::Csv).unwrap();

    let md_numbers: Vec<String> = md
        .lines()
        .nth(2)
        .unwrap()
        .split('|')
        .skip(4)
        .flat_map(|cell| {
            cell.split(|c: char| c == '±' || c == '(' || c == ')' || c == '%' || c.is_whitespace())
        })
        .filter(|t| t.parse::<f64>().is_ok())
        .map(String::from)
        .collect();
    let csv_numbers: Vec<String> = csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .skip(3)
        .filter(|t| t.parse::<f64>().is_ok())
        .map(String::from)
        .collect();
    assert_eq!(md_numbers, csv_numbers);
}
