import { defineConfig } from "vitest/config";

// The dev server proxies /api to a running `iotminer serve` instance so
// the SPA and the pipeline API share an origin during development.
export default defineConfig({
  server: {
    proxy: {
      "/api": "http://127.0.0.1:8000",
    },
  },
  test: {
    environment: "happy-dom",
    include: ["tests/**/*.test.ts"],
  },
});
