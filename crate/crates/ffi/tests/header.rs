use std::path::Path;
use std::process::Command;

fn header() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/defrauder.h");
    std::fs::read_to_string(path).expect("header generated by build script")
}

#[test]
fn declares_the_api() {
    let h = header();
    for name in [
        "typedef struct DfDataset DfDataset;",
        "typedef struct DfGroups DfGroups;",
        "typedef struct DfRanking DfRanking;",
        "DF_STATUS_OK = 0",
        "DF_STATUS_INTERNAL = 99",
        "df_last_error(void)",
        "df_dataset_load(",
        "df_dataset_from_arrays(",
        "df_detect(",
        "df_group_member(",
        "df_rank(",
        "df_ranking_get(",
        "df_ndcg_at_k(",
        "df_dataset_free(",
        "df_groups_free(",
        "df_ranking_free(",
    ] {
        assert!(h.contains(name), "header lacks `{name}`");
    }
    assert!(h.starts_with("#ifndef DEFRAUDER_H"));
}

#[test]
fn compiles_as_c() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"defrauder.h\"\n\
         int main(void) {\n\
           DfDetectionParams d = df_detection_params_default();\n\
           DfRankParams r = df_rank_params_default();\n\
           DfDataset *ds = NULL;\n\
           DfStatus s = df_dataset_load(\"x.csv\", NULL, 1, 5, &ds);\n\
           (void)d; (void)r; (void)s;\n\
           return 0;\n\
         }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
