// scratch: inspect the short scaling ladder
use coldslit::model::*;
use coldslit::scaling::*;

fn main() {
    let cfg = default_shimizu_config();
    let base = Grid1D::symmetric(2.4e-3, 961).unwrap();
    let report = scaling_report(&[1.0, 10.0, 100.0], base, &cfg).unwrap();
    for i in 0..3 {
        let g = scaled_grid(report.divisors[i], base, &cfg);
        println!(
            "eta {:6}: grid half {:.3e} n {}  spacing {:?}  L1 {:.4}",
            report.divisors[i],
            0.5 * (g.max - g.min),
            g.n_points,
            report.fringe_spacings[i],
            report.classical_distance[i]
        );
    }
}
