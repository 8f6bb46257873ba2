//! Writes features and labels in the binary and CSV formats, reads them
//! back and shows how a corrupted header is reported.

use oodkit::io::{read_features, read_labels, write_features, write_labels, Dtype};
use oodkit::FeatureMatrix;

fn main() -> oodkit::Result<()> {
    let dir = std::env::temp_dir().join(format!("oodkit-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let m = FeatureMatrix::from_rows(&[[0.25, -1.5], [3.0, 1e-3], [2.0, 2.0]])?;
    let labels = [0, 1, -1];

    for (name, dtype) in [("f64.oodf", Dtype::F64), ("f32.oodf", Dtype::F32), ("plain.csv", Dtype::F64)] {
        let path = dir.join(name);
        write_features(&m, &path, dtype)?;
        let back = read_features(&path)?;
        let err = back.as_slice().iter().zip(m.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{name}: {} bytes, max round-trip error {err:.1e}", std::fs::metadata(&path)?.len());
    }
    write_labels(&labels, &dir.join("labels.oodl"))?;
    println!("labels: {:?}", read_labels(&dir.join("labels.oodl"))?);

    let broken = dir.join("broken.oodf");
    let bytes = std::fs::read(dir.join("f64.oodf"))?;
    std::fs::write(&broken, &bytes[..19])?;
    println!("{}", read_features(&broken).unwrap_err());

    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
