pub mod gradcam;
pub mod make_scenario;
pub mod report;
pub mod run;
