//! End-to-end acceptance checks on the reference fixtures. Runs without the test
//! harness so each criterion prints one line in the normal test output.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semireg::approx::{approximate, carve_sets, coverage_check, regularized_distance, schedule_constants};
use semireg::apps::{approach_sequence, flatness_check, hausdorff_convergence, lambda_eps, zero_set_function};
use semireg::bump::{bump_cell, check_partition, partition_of_unity, SAFETY};
use semireg::cells::{lip_to_l, validate_cell, Cell};
use semireg::error::Error;
use semireg::field::{FieldRef, JetFn};
use semireg::grid::{log_spaced, BoundingBox, GridSpec};
use semireg::jet::{binomial, Jet};
use semireg::oracle::{
    g_eta_compose_bound, g_eta_contains, Circle, DistanceField, DistanceOracle, OracleRef, Point, PointCloud, PointSet, Segment, Union,
    Verdict,
};
use semireg::regular::{cert_compose, cert_product, cert_reciprocal, cert_verify, Probe, RegularFunction, RegularityCertificate};
use semireg::report::Status;
use semireg::scene::parse_scene;
use semireg::strat::{half_line_scene, points_on_line, Stratification};

type Outcome = Result<String, String>;

fn require(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn probe_for(f: &RegularFunction) -> Probe {
    match f.field.derivative_kind() {
        semireg::field::DerivativeKind::Exact => Probe::Exact,
        semireg::field::DerivativeKind::FiniteDifference => Probe::FiniteDifference,
    }
}

fn two_rays() -> Stratification {
    points_on_line(&[0.0], BoundingBox::cube(1, 100.0)).unwrap()
}

fn half_line() -> Stratification {
    half_line_scene(BoundingBox::cube(2, 1.0)).unwrap()
}

fn symmetric_log_points(lo: f64, hi: f64, per_side: usize) -> Vec<Point> {
    log_spaced(lo, hi, per_side).into_iter().flat_map(|r| [vec![-r], vec![r]]).collect()
}

fn two_ray_fixture() -> Outcome {
    let start = Instant::now();
    let s = two_rays();
    let g: FieldRef = Arc::new(DistanceField { set: s.w.clone() });
    let grid = GridSpec::new(s.bbox.clone(), 401);
    let ap = approximate(&s, &g, 1.0, 2, 0.1, &grid).map_err(|e| e.to_string())?;
    let points = symmetric_log_points(1e-4, 1e2, 500);
    let worst_err = points.iter().map(|x| (ap.f.value(x) - x[0].abs()).abs() / x[0].abs()).fold(0.0, f64::max);
    let report = cert_verify(&ap.f, &points, probe_for(&ap.f)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    require(
        worst_err <= 0.1 && report.passed() && report.worst_ratio() <= 1.0 && elapsed < 10.0 && ap.report.passed(),
        format!(
            "max |f - |x||/|x| = {worst_err:.3e}, certificate worst ratio {:.3e} over {} checks, {elapsed:.1} s",
            report.worst_ratio(),
            report.checked()
        ),
    )
}

fn half_line_fixture() -> Outcome {
    let start = Instant::now();
    let s = half_line();
    let kappa = 0.1;
    let grid = GridSpec::new(s.bbox.clone(), 200);
    let rd = regularized_distance(&s, 2, kappa, &grid).map_err(|e| e.to_string())?;
    let a_limit = 1.05 / (1.0 - kappa);
    let drift = rd
        .b_hat
        .iter()
        .zip(&rd.b_hat_refined)
        .skip(1)
        .map(|(a, b)| (a - b).abs() / a.max(*b).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let elapsed = start.elapsed().as_secs_f64();
    require(
        rd.a_hat <= a_limit && drift <= 0.1 && rd.report.passed() && elapsed < 120.0,
        format!(
            "A = {:.5} (limit {a_limit:.5}), B = {:?}, refined {:?}, drift {drift:.2e}, {elapsed:.1} s",
            rd.a_hat,
            &rd.b_hat[1..],
            &rd.b_hat_refined[1..]
        ),
    )
}

fn partitions() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    let fixtures = [
        ("two rays", points_on_line(&[0.0], BoundingBox::cube(1, 2.0)).unwrap(), 401),
        ("half line", half_line(), 101),
    ];
    for (name, s, res) in fixtures {
        let grid = GridSpec::new(s.bbox.clone(), res);
        let cover: Vec<Vec<usize>> = (0..s.len()).map(|i| vec![i]).collect();
        let part = partition_of_unity(&s, &cover, 0.5, 2, &grid).map_err(|e| e.to_string())?;
        let report = check_partition(&s, &part, &cover, &grid).map_err(|e| e.to_string())?;
        // Independent recount of the sum and range.
        let mut worst_sum = 0.0f64;
        let mut out_of_range = 0;
        for x in grid.points_off(s.w.as_ref(), 0.0).unwrap() {
            let v = part.values(&x);
            worst_sum = worst_sum.max((v.iter().sum::<f64>() - 1.0).abs());
            out_of_range += v.iter().filter(|o| !(0.0..=1.0).contains(*o)).count();
        }
        ok &= report.passed() && worst_sum <= 1e-12 && out_of_range == 0;
        details.push(format!("{name}: |sum - 1| <= {worst_sum:.1e}, {} checks, {} failed", report.checked(), report.failures().count()));
    }
    require(ok, details.join("; "))
}

fn bump_plateau_and_support() -> Outcome {
    let s = half_line();
    let i = s.index_of("axis").unwrap();
    let eta = 0.5;
    let b = bump_cell(&s, i, eta, 2).map_err(|e| e.to_string())?;
    let z = s.strata[i].clone();
    let w = s.w.clone();
    let rho = b.rho();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut plateau = Vec::new();
    while plateau.len() < 100 {
        let u: f64 = rng.gen_range(1e-3..1.0);
        let x = vec![u, rng.gen_range(-1.0..1.0) * rho * u];
        if g_eta_contains(z.as_ref(), w.as_ref(), rho, &x).unwrap() == Verdict::In {
            plateau.push(x);
        }
    }
    let mut outside = Vec::new();
    while outside.len() < 100 {
        let x = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if w.distance(&x) > 1e-6 && g_eta_contains(z.as_ref(), w.as_ref(), eta, &x).unwrap() == Verdict::Out {
            outside.push(x);
        }
    }
    let plateau_bad = plateau.iter().filter(|x| b.value(x) != 1.0).count();
    let support_bad = outside.iter().filter(|x| b.value(x) != 0.0).count();

    let c = b.constants;
    let l = lip_to_l(z.lipschitz_m).unwrap();
    let (delta, gamma) = (c.delta.unwrap(), c.gamma.unwrap());
    let (eta_p, rho_p) = (c.eta_prime.unwrap(), c.rho_prime.unwrap());
    let rd = rho_p * delta;
    let gamma_cap = 3.0 * rd * rd / (2.0 * (1.0 + rd) * (1.0 + rd));
    let sg = gamma.sqrt();
    let rho_cap = l * sg / (3f64.sqrt() + sg);
    let inequalities = [
        ("0 < eta < L", 0.0 < c.eta && c.eta < l),
        ("0 < delta < L", 0.0 < delta && delta < l),
        ("0 < rho' < eta' < eta", 0.0 < rho_p && rho_p < eta_p && eta_p < c.eta),
        ("0 < gamma <= 0.9 cap", 0.0 < gamma && gamma <= SAFETY * gamma_cap * (1.0 + 1e-12)),
        ("rho <= 0.9 rho' delta", 0.0 < rho && rho <= SAFETY * rd * (1.0 + 1e-12)),
        ("rho <= 0.9 L sqrt(gamma)/(sqrt(3)+sqrt(gamma))", rho <= SAFETY * rho_cap * (1.0 + 1e-12)),
        ("rho < eta", rho < c.eta),
    ];
    let broken: Vec<&str> = inequalities.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    require(
        plateau_bad == 0 && support_bad == 0 && broken.is_empty(),
        format!("rho = {rho:.4e}, plateau misses {plateau_bad}/100, support leaks {support_bad}/100, broken constraints {broken:?}"),
    )
}

struct Sample {
    c: f64,
    omega: f64,
    k: i32,
}

impl Sample {
    /// `c |x|^k (2 + sin ωx)`.
    fn field(&self) -> FieldRef {
        let (c, omega, k) = (self.c, self.omega, self.k);
        Arc::new(JetFn::new(1, move |x: &[Jet]| {
            let base = match k {
                0 => x[0].lift(1.0),
                1 => x[0].square().sqrt(),
                _ => x[0].square(),
            };
            base.mul(&x[0].scale(omega).sin().add_scalar(2.0)).scale(c)
        }))
    }

    /// Leibniz bound on `|D^q f|` over `0 < |x| ≤ r`, as a multiple of `|x|^{k-q}`.
    fn order_bound(&self, q: usize, r: f64) -> f64 {
        let mut total = 0.0;
        for j in 0..=q {
            let falling: f64 = (0..j).map(|i| (self.k as f64 - i as f64).abs()).product();
            let m = q - j;
            let trig = if m == 0 { 3.0 } else { self.omega.powi(m as i32) };
            total += binomial(q, j) * falling * r.powi(m as i32) * trig;
        }
        self.c * total
    }

    fn regular(&self, w: &OracleRef, p: usize, r: f64) -> RegularFunction {
        let mut orders = vec![0.0; p + 1];
        for (q, slot) in orders.iter_mut().enumerate().skip(1) {
            *slot = self.order_bound(q, r);
        }
        let cert = RegularityCertificate::from_orders(w.clone(), self.k, orders).with_sup(3.0 * self.c).with_lower(self.c);
        RegularFunction::new(self.field(), cert)
    }
}

fn combinators() -> Outcome {
    let p = 2;
    let r = 2.0;
    let w: OracleRef = Arc::new(PointSet { z: vec![0.0] });
    let grids = [symmetric_log_points(1e-3, r, 100), symmetric_log_points(1e-3, r, 301)];
    let sine: FieldRef = Arc::new(JetFn::new(1, |x: &[Jet]| x[0].sin()));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = Vec::new();
    let mut checks = 0;
    for pair in 0..20 {
        let mut draw = |k: Option<i32>| Sample {
            c: rng.gen_range(0.5..2.0),
            omega: rng.gen_range(0.5..3.0),
            k: k.unwrap_or_else(|| rng.gen_range(0..3)),
        };
        let (a, b, flat) = (draw(None), draw(None), draw(Some(0)));
        let (fa, fb, ff) = (a.regular(&w, p, r), b.regular(&w, p, r), flat.regular(&w, p, r));
        let built = [
            ("product", cert_product(&fa, &fb)),
            ("reciprocal", cert_reciprocal(&fa, &grids[1])),
            ("compose", cert_compose(&sine, &ff, (flat.c, 3.0 * flat.c))),
        ];
        for (name, rf) in built {
            let rf = rf.map_err(|e| format!("pair {pair} {name}: {e}"))?;
            for pts in &grids {
                let report = cert_verify(&rf, pts, Probe::Exact).map_err(|e| e.to_string())?;
                checks += report.checked();
                if report.verdict() == Status::Fail {
                    failures.push(format!("pair {pair} {name} (ratio {:.3})", report.worst_ratio()));
                }
            }
        }
    }
    require(failures.is_empty(), format!("{checks} checks over 20 pairs, failures {failures:?}"))
}

fn relative_neighbourhoods() -> Outcome {
    let w: OracleRef = Arc::new(Segment::half_line(vec![0.0, 0.0], vec![-1.0, 0.0]));
    let z1: OracleRef = Arc::new(PointSet { z: vec![0.5, 0.5] });
    let z2: OracleRef = Arc::new(Segment::new(vec![0.2, -0.4], vec![0.9, 0.1]));
    let both = Union { n: 2, parts: vec![z1.clone(), z2.clone()] };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut samples = Vec::new();
    while samples.len() < 1000 {
        let x = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if w.distance(&x) > 1e-6 {
            samples.push(x);
        }
    }
    let mut union_mismatch = 0;
    for eta in [0.1, 0.3, 0.5] {
        for x in &samples {
            let joint = g_eta_contains(&both, w.as_ref(), eta, x).unwrap() == Verdict::In;
            let split = g_eta_contains(z1.as_ref(), w.as_ref(), eta, x).unwrap() == Verdict::In
                || g_eta_contains(z2.as_ref(), w.as_ref(), eta, x).unwrap() == Verdict::In;
            union_mismatch += usize::from(joint != split);
        }
    }
    let dense = GridSpec::new(BoundingBox::cube(2, 1.0), 201).points_off(w.as_ref(), 0.0).unwrap();
    let mut violations = 0;
    let mut tested = 0;
    for eta in [0.1, 0.3, 0.5] {
        let inner: Vec<Point> = dense
            .iter()
            .filter(|x| g_eta_contains(z2.as_ref(), w.as_ref(), eta, x).unwrap() == Verdict::In)
            .cloned()
            .collect();
        let cloud = PointCloud::new(2, inner, 0.0);
        for eps in [0.1, 0.3, 0.5] {
            let outer = g_eta_compose_bound(eps, eta);
            for x in &samples {
                if g_eta_contains(&cloud, w.as_ref(), eps, x).unwrap() == Verdict::In {
                    tested += 1;
                    violations += usize::from(g_eta_contains(z2.as_ref(), w.as_ref(), outer, x).unwrap() == Verdict::Out);
                }
            }
        }
    }
    require(
        union_mismatch == 0 && violations == 0 && tested > 0,
        format!("union mismatches {union_mismatch}/3000, composition violations {violations}/{tested}"),
    )
}

fn flatness() -> Outcome {
    let p = 2;
    let s = points_on_line(&[0.0], BoundingBox::cube(1, 2.0)).unwrap();
    let g: FieldRef = Arc::new(DistanceField { set: s.w.clone() });
    let ap = approximate(&s, &g, 1.0, p, 0.1, &GridSpec::new(s.bbox.clone(), 401)).map_err(|e| e.to_string())?;
    let h = zero_set_function(ap.f.field.clone(), s.w.clone(), p, &[vec![-1.0], vec![1.0]]).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut fits = Vec::new();
    for dir in [1.0, -1.0] {
        let approach = approach_sequence(&[0.0], &[dir], 1e-1, 1e-6, 30);
        let report = flatness_check(&h, s.w.as_ref(), p, &approach).map_err(|e| e.to_string())?;
        for q in 0..=p {
            let fitted = report.fitted(&format!("flatness.exponent({q})")).ok_or("missing fit")?;
            let expected = (p + 1 - q) as f64;
            worst = worst.max((fitted - expected).abs());
            fits.push(format!("{fitted:.4}"));
        }
    }
    require(worst <= 0.1, format!("exponents {fits:?}, worst deviation {worst:.2e}"))
}

fn circle_scene() -> (Stratification, semireg::scene::Scene) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes");
    let scene = parse_scene(&std::fs::read_to_string(dir.join("circle.scene")).unwrap()).unwrap();
    (scene.build(&dir).unwrap(), scene)
}

fn level_sets() -> Outcome {
    let (s, scene) = circle_scene();
    let grid = scene.grid_spec();
    let rd = regularized_distance(&s, scene.params.p, scene.params.kappa, &grid).map_err(|e| e.to_string())?;
    let bbox = grid.bbox.clone();
    let pitch = grid.pitch();
    let samples = s.w.sample(&bbox, 0.002);
    let levels = [0.2, 0.1, 0.05, 0.025];
    let f = rd.f().field.clone();
    let (table, _) = hausdorff_convergence(f.as_ref(), &samples, &levels, &bbox, grid.resolution).map_err(|e| e.to_string())?;
    let dh: Vec<f64> = table.rows.iter().map(|r| r.hausdorff).collect();
    let monotone = dh.windows(2).all(|w| w[1] <= w[0]);
    let final_ok = dh[3] <= rd.a_hat * 0.025 + 2.0 * pitch;
    let exact = DistanceField { set: Arc::new(Circle { c: vec![0.0, 0.0], r: 1.0 }) };
    let (oracle, _) = hausdorff_convergence(&exact, &samples, &levels, &bbox, grid.resolution).map_err(|e| e.to_string())?;
    let oracle_worst = oracle.rows.iter().map(|r| (r.hausdorff - r.t).abs()).fold(0.0, f64::max);
    require(
        monotone && final_ok && oracle_worst <= 2.0 * pitch,
        format!("d_H = {dh:.4?}, A = {:.4}, pitch {pitch:.4}, oracle mode worst |d_H - t| = {oracle_worst:.2e}", rd.a_hat),
    )
}

fn lambda_diagnostic() -> Outcome {
    let bbox = BoundingBox::cube(2, 1.5);
    let circle = Circle { c: vec![0.0, 0.0], r: 1.0 };
    let sets = [("point", vec![vec![0.0, 0.0]]), ("circle", circle.sample(&bbox, 0.002))];
    let mut ratios = Vec::new();
    let mut ok = true;
    for (name, samples) in &sets {
        for eps in [0.2, 0.1, 0.05] {
            let ratio = lambda_eps(samples, eps, &bbox, 601).map_err(|e| e.to_string())? / eps;
            ok &= (0.8..=1.2).contains(&ratio);
            ratios.push(format!("{name} {eps}: {ratio:.4}"));
        }
    }
    require(ok, format!("lambda/eps {ratios:?}"))
}

fn negative_cases() -> Outcome {
    let s = half_line();
    let mut sched = schedule_constants(&s, 1.0, 0.1).map_err(|e| e.to_string())?;
    sched.eta[1] = 3.0 * sched.delta[0];
    let grid = GridSpec::new(s.bbox.clone(), 41);
    let carved = carve_sets(&s, &sched, &grid).map_err(|e| e.to_string())?;
    let coverage_fails = coverage_check(&s, &carved, &sched).verdict() == Status::Fail;

    let root: FieldRef = Arc::new(JetFn::new(1, |x: &[Jet]| x[0].sqrt()));
    let cell = Cell::graph_2d("root", Cell::interval("t", Some(0.0), Some(1.0)), root, 1.0);
    let cell_rejected = !validate_cell(&cell, 1, &GridSpec::new(BoundingBox::cube(2, 2.0), 50)).map_err(|e| e.to_string())?.passed();

    let cover: Vec<Vec<usize>> = vec![vec![0], vec![1]];
    let gap = match partition_of_unity(&s, &cover, 0.5, 2, &grid) {
        Err(e @ Error::CoverageGap(_)) => Some(e.exit_code()),
        _ => None,
    };
    require(
        coverage_fails && cell_rejected && gap == Some(4),
        format!("corrupted schedule rejected: {coverage_fails}, square-root cell rejected: {cell_rejected}, gap exit code {gap:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("two-ray fixture", two_ray_fixture),
        ("half-line regularized distance", half_line_fixture),
        ("partition of unity", partitions),
        ("bump plateau and support", bump_plateau_and_support),
        ("combinator soundness", combinators),
        ("relative neighbourhoods", relative_neighbourhoods),
        ("zero-set flatness", flatness),
        ("level-set convergence", level_sets),
        ("lambda diagnostic", lambda_diagnostic),
        ("negative cases", negative_cases),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let (verdict, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {verdict}: {name}: {detail}", k + 1);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
