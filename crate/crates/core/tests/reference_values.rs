//! Checks against values frozen from an independent numpy computation.

mod support;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use panelci_core::fourblock::{cell_variance, estimate_residuals, four_block_estimate, FourBlockProblem};
use panelci_core::lowrank::truncated_svd;
use panelci_core::synth::fit_factor_model;

const SVD_INPUT: [f64; 48] = [
    -1.738266398496882, -1.3366427931811324, -1.361106708564987, -0.35161713127840977, -2.3125815796967033, -0.18889719608460778,
    -0.957229228096346, 0.8936001849299788, 0.956847237579234, 1.3922582291390866, 0.7674701130947078, -0.053029778757267734,
    0.8597939889439096, 1.5054811563838433, -0.6535945334170485, 0.610351145830187, -0.042673827710852374, 1.4400167254152394,
    -0.8368950200968434, -0.3015466095655266, 0.36233859316943917, 0.25811026702099754, -1.6394479624476481, 0.360155232237386,
    -0.11849769951697288, -0.23974784920156203, -0.15530166200229314, 0.21897170507821917, -1.8163956614546406, 1.5524665679968663,
    -0.8614416732885682, -2.2413678581872873, -0.08197449383484104, 1.4574804175244145, -0.5186009711032398, 1.5512756209056682,
    1.5569420010285768, -0.8627319171113763, -2.4651208152773547, -1.2351827568078488, 1.1874322225543146, -0.8167721736209068,
    -1.5106774902505407, -1.3376946740539473, 0.00018014422029518804, -0.026108483729201715, 0.8720449149097206, 0.9890499704668804,
];
const SVD_S: [f64; 3] = [
    5.041854267002407, 4.043228930772958, 3.076827961538529,
];
const SVD_U: [f64; 24] = [
    -0.5217939325413384, -0.4500043976734849, -0.2312180667180635,
    -0.007896369313397614, 0.4782846353513927, 0.24173475328086125,
    0.09606172388441496, 0.19152541092605077, -0.3867812320809936,
    -0.34515150760087904, 0.053983581484408974, -0.23629676357203325,
    -0.3594892649173989, 0.0008708198258798499, -0.40831539892696656,
    -0.5207921904141204, -0.04974055588855973, 0.39906229141256366,
    0.37121177154221363, -0.7239922990871405, 0.11505921053839858,
    -0.24709533545012383, -0.05003907669289484, 0.5860510501284343,
];
const SVD_V: [f64; 18] = [
    0.5411682940401434, -0.13973545063237736, -0.3139114846930691,
    0.4369126303826368, 0.5203207924674085, -0.5413830357617502,
    -0.05985713421948329, 0.6809387859659176, 0.1496229915979462,
    -0.22765500437983058, 0.4398020797127951, 0.14807143864659997,
    0.5773189653221082, 0.10683300312782351, 0.749646269464428,
    -0.35712374001327185, 0.20303567827578248, -0.0456318801678966,
];
const FB_INPUT: [f64; 56] = [
    0.837363383451226, 0.125548293056019, 0.8626815647834952, 0.7505542370911813, 2.671234890866455, -1.109175099940729, 0.45697194009948855,
    -3.962788611786999, -2.385226993247444, 3.274751347780761, -2.0670652602855824, 1.6489425096031463, -1.7239696370140858, 2.3441106484110943,
    -0.20894765207353796, 0.031501623860522174, -0.8020118926030702, -0.1704690069798121, -1.2896312495353799, 0.5896808335090471, -0.3648454102981177,
    -1.62201735124859, -0.6698778467586007, -0.2654729562381396, -1.0494140504538638, -2.3928694082146595, 0.5926829214013033, 0.13086060066200236,
    -0.47484123459169325, -0.4978912554327389, 0.9011243986075067, -0.17596380493025293, 1.1116148137855386, -0.757996093768787, 0.6428321795365807,
    1.3700827986827666, 0.6067768310933827, -0.026797346653791042, 0.8281858738360869, 1.3330946387253217, -0.4200113047637406, -0.28193455158494685,
    -3.6396581616619406, -1.8278926046654944, 0.32026424223990013, -2.3538162635941453, -3.501516185763962, 0.9947041390438762, 0.622089330942192,
    3.3548613352355026, 1.757448144022913, -0.8114885661550897, 2.2449266989643473, 2.6044625273755067, -0.34719978121755124, -0.8294388913730274,
];
const FB_MD: [f64; 12] = [
    1.1270562924563585, -0.646877877239637, 0.5787701474492456,
    1.4455966744845685, -0.330631294113879, -0.2027030716408669,
    -3.5164264326515533, 0.697612608739514, 0.6950321158945787,
    2.401027569773741, -0.2418944704182903, -0.9185037651735245,
];
const FB_GAMMA: [f64; 12] = [
    0.001827278512646197, 0.0005526007344261344, 0.0003748972578112382,
    0.002825521309676144, 0.0012502364104348582, 0.0005321544739387568,
    0.004330113111684842, 0.006910789927958558, 0.003407018243376427,
    0.008558812149149766, 0.004578331613513806, 0.0020200706632305275,
];
const FM_NOISE: f64 = 0.003332633282396983;
const FM_U_COV_DIAG: [f64; 2] = [
    1.3715956691200144, 0.8644542481957167,
];
const FM_V_COV_DIAG: [f64; 2] = [
    1.1737609848398254, 1.0226383796510528,
];
const FM_MEAN_PRODUCT: [f64; 2] = [
    -0.12691754686411838, 0.0808548319450021,
];

fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

#[test]
fn svd_8x6_top_three() {
    let a = mat(8, 6, &SVD_INPUT);
    let svd = truncated_svd(&a, 3).unwrap();
    for j in 0..3 {
        assert_abs_diff_eq!(svd.s[j], SVD_S[j], epsilon = 1e-8);
    }
    assert_abs_diff_eq!(svd.u, mat(8, 3, &SVD_U), epsilon = 1e-8);
    assert_abs_diff_eq!(svd.v, mat(6, 3, &SVD_V), epsilon = 1e-8);
}

#[test]
fn four_block_8x7() {
    let y = mat(8, 7, &FB_INPUT);
    let p = FourBlockProblem::from_full(&y, 4, 4).unwrap();
    let fit = four_block_estimate(&p, 2).unwrap();
    assert_abs_diff_eq!(fit.m_hat_d, mat(4, 3, &FB_MD), epsilon = 1e-8);
    let res = estimate_residuals(&p, &fit).unwrap();
    let gamma = mat(4, 3, &FB_GAMMA);
    for j in 0..4 {
        for s in 0..3 {
            let g = cell_variance(&fit, &res, 4 + j, 4 + s).unwrap();
            assert_abs_diff_eq!(g, gamma[(j, s)], epsilon = 1e-10);
        }
    }
}

#[test]
fn factor_model_fit() {
    let y = mat(8, 7, &FB_INPUT);
    let fm = fit_factor_model(&y, 2).unwrap();
    assert_abs_diff_eq!(fm.noise_var, FM_NOISE, epsilon = 1e-8);
    for j in 0..2 {
        assert_abs_diff_eq!(fm.u_cov[(j, j)], FM_U_COV_DIAG[j], epsilon = 1e-8);
        assert_abs_diff_eq!(fm.v_cov[(j, j)], FM_V_COV_DIAG[j], epsilon = 1e-8);
        assert_abs_diff_eq!(fm.u_mean[j] * fm.v_mean[j], FM_MEAN_PRODUCT[j], epsilon = 1e-8);
    }
}
