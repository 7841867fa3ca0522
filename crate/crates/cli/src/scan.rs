use std::path::PathBuf;

use clap::{Args, ValueEnum};
use sodscan_core::scan_order::{
    binarize, bundle_to_csv, path_divergence, salient_polyline_svg, sns_path_bundle_with, SalientOrder,
};

use crate::maps::load_map;
use crate::{write_file, CmdResult};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OrderArg {
    Neighbour,
    Raster,
    Boustrophedon,
    Diagonal,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    /// Coarse saliency map (PGM or PNG).
    map: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Path CSV; printed to stdout when omitted.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// SVG of the mask and the salient polyline.
    #[arg(long)]
    out_svg: Option<PathBuf>,
    /// SVG cell size in pixels.
    #[arg(long, default_value_t = 24)]
    cell: usize,
    /// Order of the salient subsequence.
    #[arg(long, value_enum, default_value_t = OrderArg::Neighbour)]
    order: OrderArg,
    /// Use four copies of the base path instead of the variants.
    #[arg(long)]
    no_variants: bool,
}

pub fn run(a: ScanArgs) -> CmdResult {
    let map = load_map(&a.map)?;
    let mask = binarize(&map, a.threshold)?;
    let order = match a.order {
        OrderArg::Neighbour => SalientOrder::Neighbour,
        OrderArg::Raster => SalientOrder::Raster,
        OrderArg::Boustrophedon => SalientOrder::Boustrophedon,
        OrderArg::Diagonal => SalientOrder::Diagonal,
    };
    let bundle = sns_path_bundle_with(&mask, order, !a.no_variants)?;
    let csv = bundle_to_csv(&bundle);
    match &a.out_csv {
        Some(p) => write_file(p, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(p) = &a.out_svg {
        let salient = &bundle.paths()[0].order()[..mask.count()];
        write_file(p, salient_polyline_svg(&mask, salient, a.cell.max(1)))?;
    }
    eprintln!(
        "{}x{} map, {} salient patches, diverges from S pattern: {}",
        mask.height(),
        mask.width(),
        mask.count(),
        path_divergence(&mask)?
    );
    Ok(())
}
