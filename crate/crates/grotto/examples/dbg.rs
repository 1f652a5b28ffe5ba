use grotto::harness::*;
use grotto::syntax::parse_theory;

fn main() {
    let src = "theory T { type b() const c : b() const d : b() }";
    let sig = parse_theory(src).unwrap().signature;
    let report = run_soundness_fuzz(&sig, src, 5, 8).unwrap();
    for f in &report.failures {
        eprintln!("iter {} [{}]: {}", f.iteration, f.kind, &f.detail[..f.detail.len().min(400)]);
    }
    eprintln!("counts: {:?}", report.counts);
}
