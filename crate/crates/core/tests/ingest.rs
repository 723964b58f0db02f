use std::path::{Path, PathBuf};

use anticipation::dataset::{load_corpus, load_split_list, DatasetLayout};
use anticipation::segment::ActionSegment;
use anticipation::Error;

fn fixture() -> DatasetLayout {
    DatasetLayout::new(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny"))
}

#[test]
fn two_video_split_loads_sorted_with_segments() {
    let layout = fixture();
    let vocab = layout.vocabulary().unwrap();
    assert_eq!(vocab.names(), ["SIL", "take_cup", "pour_milk", "stir"]);

    let corpus = layout.load_split("train", &vocab).unwrap();
    let ids: Vec<&str> = corpus.iter().map(|v| v.id.as_str()).collect();
    assert_eq!(ids, ["P01_milk", "P02_milk"]);

    let seg = |l, n| ActionSegment::new(l, n);
    assert_eq!(
        corpus[0].segments().segments(),
        [seg(0, 2), seg(1, 3), seg(2, 1), seg(0, 1)]
    );
    assert_eq!(corpus[1].segments().segments(), [seg(1, 1), seg(3, 3)]);
    assert_eq!(corpus[0].frames(), [0, 0, 1, 1, 1, 2, 0]);
}

#[test]
fn empty_split_gives_empty_corpus() {
    let layout = fixture();
    let vocab = layout.vocabulary().unwrap();
    assert!(load_split_list(&layout.split("empty")).unwrap().is_empty());
    assert!(layout.load_split("empty", &vocab).unwrap().is_empty());
}

#[test]
fn unknown_token_reports_file_and_line() {
    let layout = fixture();
    let vocab = layout.vocabulary().unwrap();
    match layout.load_split("broken", &vocab) {
        Err(Error::Parse { path, line, message }) => {
            assert!(path.ends_with("P03_milk.txt"), "{}", path.display());
            assert_eq!(line, 7);
            assert!(message.contains("pour_juice"), "{message}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn missing_files_are_io_errors() {
    let layout = fixture();
    let vocab = layout.vocabulary().unwrap();
    let err = load_corpus(&layout.ground_truth_dir(), &["P09_none".to_string()], &vocab).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(matches!(
        DatasetLayout::new(PathBuf::from("/nonexistent")).vocabulary(),
        Err(Error::Io { .. })
    ));
}
