use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice vectors are (nearly) parallel: |e1^e2| = {wedge:e}")]
    DegenerateLattice { wedge: f64 },
    #[error("cutoff {cutoff} smaller than required {required}")]
    CutoffTooSmall { cutoff: usize, required: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("grid minimum at {index:?} cannot be resolved by the local quadratic fit")]
    MinimumOnGridBoundaryUnresolved { index: [usize; 2] },
    #[error("Hessian at the band minimum is not positive definite (eigenvalues {m1:e}, {m2:e})")]
    NonPositiveHessian { m1: f64, m2: f64 },
    #[error("ground state changes sign or phase (ratio {ratio:e})")]
    SignChangeInGroundState { ratio: f64 },
    #[error("gauge reference overlap {overlap:e} below threshold at grid point {index:?}")]
    GaugeReferenceDegenerate { overlap: f64, index: [usize; 2] },
    #[error("Wannier norm {norm} deviates from 1 by more than 1e-3")]
    NormLoss { norm: f64 },
    #[error("quadrature box does not cover the overlap for separation {separation}")]
    QuadratureOverlapTruncated { separation: f64 },
    #[error("Gramian nearly singular: smallest eigenvalue {min_eig:e}")]
    NearSingularGramian { min_eig: f64 },
    #[error("finite-difference grid too coarse: zero-field hoppings deviate by {deviation:e}")]
    GridTooCoarse { deviation: f64 },
    #[error("flux per cell {flux} is not 2*pi*p/q for q = {q}")]
    IrrationalFluxOnTorus { flux: f64, q: usize },
    #[error("torus geometry requires kappa = 0, got {kappa}")]
    KappaOnTorus { kappa: f64 },
    #[error("quasi-Bloch function has imaginary part {imag:e}")]
    ComplexQuasiBloch { imag: f64 },
    #[error("no eigenvalue in window [{lo}, {hi}]")]
    EmptyWindow { lo: f64, hi: f64 },
    #[error("found {found} islands, expected at least {expected}")]
    IslandCountMismatch { found: usize, expected: usize },
    #[error("clusters unresolvable at kappa = {kappa}: {found} islands, expected {expected}")]
    ClustersUnresolvable { kappa: f64, found: usize, expected: usize },
    #[error("band crossing: effective model refused")]
    CrossingBandRefused,
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable kind, used in error records and reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateLattice { .. } => "DegenerateLattice",
            Error::CutoffTooSmall { .. } => "CutoffTooSmall",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::MinimumOnGridBoundaryUnresolved { .. } => "MinimumOnGridBoundaryUnresolved",
            Error::NonPositiveHessian { .. } => "NonPositiveHessian",
            Error::SignChangeInGroundState { .. } => "SignChangeInGroundState",
            Error::GaugeReferenceDegenerate { .. } => "GaugeReferenceDegenerate",
            Error::NormLoss { .. } => "NormLoss",
            Error::QuadratureOverlapTruncated { .. } => "QuadratureOverlapTruncated",
            Error::NearSingularGramian { .. } => "NearSingularGramian",
            Error::GridTooCoarse { .. } => "GridTooCoarse",
            Error::IrrationalFluxOnTorus { .. } => "IrrationalFluxOnTorus",
            Error::KappaOnTorus { .. } => "KappaOnTorus",
            Error::ComplexQuasiBloch { .. } => "ComplexQuasiBloch",
            Error::EmptyWindow { .. } => "EmptyWindow",
            Error::IslandCountMismatch { .. } => "IslandCountMismatch",
            Error::ClustersUnresolvable { .. } => "ClustersUnresolvable",
            Error::CrossingBandRefused => "CrossingBandRefused",
            Error::Eigensolver(_) => "Eigensolver",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::Io { .. } => "Io",
        }
    }
}
