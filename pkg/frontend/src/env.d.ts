// Stylesheet imports are handled by the bundler; give them an ambient
// module type so `tsc --noEmit` accepts the side-effect import.
declare module "*.css";
