/**
 * DOM panels around the 3D viewport: status bar, mapping/filter menu, detail
 * and statistics panes, watchlist, and the snapshot gallery. The skeleton is
 * built once; render() refreshes text and values in place so focused inputs
 * survive updates.
 */

import { ViewModel } from "./viewmodel.js";
import {
  VIZ_BARCHART,
  VIZ_SCATTER,
  cubeState,
  wallState,
  type FilterW,
  type MappingW,
  type SnapshotStateW,
} from "./wire.js";
import {
  ANCHOR_DEFINING,
  ALIGNING,
  AWAITING_WELCOME,
  CONNECTING,
  DISCOVERING,
  GAZE_TAP,
  RECONNECTING,
  SYNCED,
} from "./client.js";
import {
  applyFilters,
  displayValue,
  exportCsv,
  hasRegion,
  numericColumns,
  recordDetail,
  subsetStatistics,
  watchlistExport,
  REGION_COLUMN,
  YEAR_MAX,
  YEAR_MIN,
} from "./dataset.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

function download(filename: string, text: string): void {
  const blob = new Blob([text], { type: "text/csv" });
  const url = URL.createObjectURL(blob);
  const a = el("a");
  a.href = url;
  a.download = filename;
  a.click();
  setTimeout(() => URL.revokeObjectURL(url), 5000);
}

export class UiPanels {
  private readonly statusPhase: HTMLSpanElement;
  private readonly statusUsers: HTMLSpanElement;
  private readonly statusRole: HTMLSpanElement;
  private readonly statusInput: HTMLSpanElement;
  private readonly statusDigest: HTMLSpanElement;
  private readonly banner: HTMLDivElement;
  private readonly langButtons = new Map<string, HTMLButtonElement>();

  private readonly title: HTMLHeadingElement;
  private readonly menuBox: HTMLDivElement;
  private readonly vizLabel: HTMLDivElement;
  private readonly vizButtons = new Map<string, HTMLButtonElement>();
  private readonly mappingLabel: HTMLDivElement;
  private readonly channelRows = new Map<string, { label: HTMLLabelElement; select: HTMLSelectElement }>();
  private readonly tracesLabel: HTMLLabelElement;
  private readonly tracesBox: HTMLInputElement;
  private readonly filterLabel: HTMLDivElement;
  private readonly yearLabel: HTMLLabelElement;
  private readonly yearMin: HTMLInputElement;
  private readonly yearMax: HTMLInputElement;
  private readonly regionLabel: HTMLDivElement;
  private readonly regionBox: HTMLDivElement;
  private readonly exportBtn: HTMLButtonElement;

  private readonly detailTitle: HTMLDivElement;
  private readonly detailBody: HTMLDivElement;
  private readonly watchTitle: HTMLDivElement;
  private readonly watchAddBtn: HTMLButtonElement;
  private readonly watchList: HTMLUListElement;
  private readonly watchExportBtn: HTMLButtonElement;
  private readonly statsTitle: HTMLDivElement;
  private readonly statsBody: HTMLDivElement;
  private readonly snapTitle: HTMLDivElement;
  private readonly snapTakeBtn: HTMLButtonElement;
  private readonly snapList: HTMLUListElement;

  constructor(
    private readonly vm: ViewModel,
    header: HTMLElement,
    menu: HTMLElement,
    side: HTMLElement,
  ) {
    // -- status bar
    this.title = el("h1", "app-title");
    const status = el("div", "status-group");
    this.statusPhase = el("span", "badge phase");
    this.statusUsers = el("span", "badge");
    this.statusRole = el("span", "badge");
    this.statusInput = el("span", "badge");
    this.statusDigest = el("span", "badge digest");
    const langGroup = el("span", "lang-group");
    for (const lang of ["en", "ja"]) {
      const btn = el("button", "lang-btn");
      btn.addEventListener("click", () => this.vm.setLanguage(lang));
      this.langButtons.set(lang, btn);
      langGroup.appendChild(btn);
    }
    status.append(
      this.statusPhase,
      this.statusUsers,
      this.statusRole,
      this.statusInput,
      this.statusDigest,
      langGroup,
    );
    this.banner = el("div", "banner hidden");
    header.append(this.title, status, this.banner);

    // -- menu panel
    this.menuBox = el("div", "menu-box");
    this.vizLabel = el("div", "section-label");
    const vizRow = el("div", "row");
    for (const mode of [VIZ_SCATTER, VIZ_BARCHART]) {
      const btn = el("button", "mode-btn");
      btn.addEventListener("click", () => this.vm.setVizMode(mode));
      this.vizButtons.set(mode, btn);
      vizRow.appendChild(btn);
    }
    this.mappingLabel = el("div", "section-label");
    const mappingBox = el("div", "mapping-box");
    for (const channel of ["x", "y", "z", "color", "size"] as const) {
      const label = el("label");
      const select = el("select");
      select.addEventListener("change", () => this.onChannelChange(channel, select.value));
      label.appendChild(select);
      mappingBox.appendChild(label);
      this.channelRows.set(channel, { label, select });
    }
    this.tracesLabel = el("label", "check-row");
    this.tracesBox = el("input");
    this.tracesBox.type = "checkbox";
    this.tracesBox.addEventListener("change", () => {
      const mapping = this.mapping();
      if (mapping) this.vm.setMapping({ ...mapping, traces_enabled: this.tracesBox.checked });
    });
    this.tracesLabel.prepend(this.tracesBox);
    mappingBox.appendChild(this.tracesLabel);

    this.filterLabel = el("div", "section-label");
    const filterBox = el("div", "filter-box");
    this.yearLabel = el("label", "range-row");
    this.yearMin = el("input");
    this.yearMax = el("input");
    for (const input of [this.yearMin, this.yearMax]) {
      input.type = "number";
      input.min = String(YEAR_MIN);
      input.max = String(YEAR_MAX);
      input.addEventListener("change", () => this.onYearChange());
    }
    this.yearLabel.append(this.yearMin, this.yearMax);
    this.regionLabel = el("div", "section-label sub");
    this.regionBox = el("div", "region-box");
    filterBox.append(this.yearLabel, this.regionLabel, this.regionBox);

    this.exportBtn = el("button", "wide-btn");
    this.exportBtn.addEventListener("click", () => this.onExport());

    this.menuBox.append(
      this.vizLabel,
      vizRow,
      this.mappingLabel,
      mappingBox,
      this.filterLabel,
      filterBox,
      this.exportBtn,
    );
    menu.appendChild(this.menuBox);

    // -- side panel
    this.detailTitle = el("div", "section-label");
    this.detailBody = el("div", "detail-body");
    this.watchTitle = el("div", "section-label");
    this.watchAddBtn = el("button", "wide-btn");
    this.watchAddBtn.addEventListener("click", () => this.onWatchAdd());
    this.watchList = el("ul", "watch-list");
    this.watchExportBtn = el("button", "wide-btn");
    this.watchExportBtn.addEventListener("click", () => this.onWatchExport());
    this.statsTitle = el("div", "section-label");
    this.statsBody = el("div", "stats-body");
    this.snapTitle = el("div", "section-label");
    this.snapTakeBtn = el("button", "wide-btn");
    this.snapTakeBtn.addEventListener("click", () => this.vm.takeSnapshot());
    this.snapList = el("ul", "snap-list");
    side.append(
      this.detailTitle,
      this.detailBody,
      this.watchTitle,
      this.watchAddBtn,
      this.watchList,
      this.watchExportBtn,
      this.statsTitle,
      this.statsBody,
      this.snapTitle,
      this.snapTakeBtn,
      this.snapList,
    );

    vm.subscribe(() => this.render());
    this.render();
  }

  // -- helpers ---------------------------------------------------------------

  private mapping(): MappingW | null {
    const cube = this.vm.replica ? cubeState(this.vm.replica) : null;
    return cube?.mapping ?? null;
  }

  private filter(): FilterW | null {
    const cube = this.vm.replica ? cubeState(this.vm.replica) : null;
    return cube?.filter ?? null;
  }

  private phaseKey(): string {
    const core = this.vm.core;
    if (core.rejected && core.lastError?.code === "session_full") return "session.full";
    switch (core.phase) {
      case SYNCED:
        return "session.synced";
      case RECONNECTING:
        return "session.reconnecting";
      case DISCOVERING:
      case CONNECTING:
      case AWAITING_WELCOME:
      case ANCHOR_DEFINING:
      case ALIGNING:
      default:
        return "session.connecting";
    }
  }

  // -- event handlers ----------------------------------------------------------

  private onChannelChange(channel: "x" | "y" | "z" | "color" | "size", value: string): void {
    const mapping = this.mapping() ?? this.vm.defaultMapping();
    if (!mapping) return;
    this.vm.setMapping({ ...mapping, [channel]: value });
  }

  private onYearChange(): void {
    const filter = this.filter();
    if (!filter) return;
    const lo = this.yearMin.value === "" ? null : Number(this.yearMin.value);
    const hi = this.yearMax.value === "" ? null : Number(this.yearMax.value);
    const range: [number, number] | null =
      lo !== null && hi !== null && Number.isInteger(lo) && Number.isInteger(hi) && lo <= hi
        ? [lo, hi]
        : null;
    this.vm.setFilter({ ...filter, year_range: range });
  }

  private onRegionToggle(region: string, checked: boolean): void {
    const filter = this.filter();
    const ds = this.vm.dataset;
    if (!filter || !ds) return;
    const all = this.allRegions();
    const current = new Set(filter.regions ?? all);
    if (checked) current.add(region);
    else current.delete(region);
    const next = all.filter((r) => current.has(r));
    this.vm.setFilter({ ...filter, regions: next.length === all.length ? null : next });
  }

  private allRegions(): string[] {
    const ds = this.vm.dataset;
    if (!ds || !hasRegion(ds)) return [];
    const seen = new Set<string>();
    for (const row of ds.rows) if (row.region !== null) seen.add(row.region);
    return [...seen].sort();
  }

  private onExport(): void {
    const ds = this.vm.dataset;
    const filter = this.filter();
    if (!ds || !filter) return;
    download("export.csv", exportCsv(ds, applyFilters(ds, filter)));
  }

  private selectedIndividual(): string | null {
    const cube = this.vm.replica ? cubeState(this.vm.replica) : null;
    const ds = this.vm.dataset;
    if (!cube || cube.selected_row === null || !ds) return null;
    const row = ds.rows[cube.selected_row];
    return row ? row.individualId : null;
  }

  private onWatchAdd(): void {
    const ind = this.selectedIndividual();
    if (ind !== null) this.vm.watchlistAdd(ind);
  }

  private onWatchExport(): void {
    const ds = this.vm.dataset;
    const cube = this.vm.replica ? cubeState(this.vm.replica) : null;
    if (!ds || !cube) return;
    download("watchlist.csv", watchlistExport(ds, cube.watchlist));
  }

  // -- render ------------------------------------------------------------------

  render(): void {
    const vm = this.vm;
    const t = (key: string) => vm.t(key);
    const cube = vm.replica ? cubeState(vm.replica) : null;
    const canEdit = vm.canEdit;

    this.title.textContent = t("app.title");
    this.statusPhase.textContent = t(this.phaseKey());
    this.statusPhase.classList.toggle("ok", vm.core.phase === SYNCED);
    const users = vm.replica ? Object.keys(vm.replica.user_poses).length : 0;
    this.statusUsers.textContent = `${t("session.users")}: ${users}`;
    this.statusRole.textContent = t(vm.isObserver ? "role.observer" : "role.participant");
    this.statusInput.textContent = t(
      vm.core.localPrefs.inputMode === GAZE_TAP ? "input.gaze_tap" : "input.ray_pointer",
    );
    const digest = vm.core.digest();
    this.statusDigest.textContent = digest ? digest.slice(0, 8) : "";
    for (const [lang, btn] of this.langButtons) {
      btn.textContent = t(`language.${lang}`);
      btn.classList.toggle("active", vm.language === lang);
    }
    const err = vm.core.lastError;
    if (vm.core.rejected && err) {
      this.banner.textContent = t("session.full");
      this.banner.classList.remove("hidden");
    } else if (vm.core.phase === RECONNECTING) {
      this.banner.textContent = t("session.reconnecting");
      this.banner.classList.remove("hidden");
    } else {
      this.banner.classList.add("hidden");
    }

    // -- menu
    this.vizLabel.textContent = t("menu.viz_mode");
    for (const [mode, btn] of this.vizButtons) {
      btn.textContent = t(mode === VIZ_SCATTER ? "mode.scatter" : "mode.barchart");
      btn.classList.toggle("active", cube?.viz_mode === mode);
      btn.disabled = !canEdit;
    }
    this.mappingLabel.textContent = t("menu.mapping");
    const mapping = this.mapping();
    const columns = vm.dataset ? numericColumns(vm.dataset) : [];
    for (const [channel, row] of this.channelRows) {
      const label = row.label.querySelector("span") ?? row.label.insertBefore(el("span"), row.select);
      label.textContent = t(`channel.${channel}`);
      this.syncSelect(row.select, columns, mapping ? (mapping as unknown as Record<string, string>)[channel] : "");
      row.select.disabled = !canEdit || columns.length === 0;
    }
    const tracesText = this.tracesLabel.querySelector("span") ?? this.tracesLabel.appendChild(el("span"));
    tracesText.textContent = t("channel.traces");
    this.tracesBox.checked = mapping?.traces_enabled ?? false;
    this.tracesBox.disabled = !canEdit || !mapping;

    this.filterLabel.textContent = t("menu.filters");
    const yearText = this.yearLabel.querySelector("span") ?? this.yearLabel.insertBefore(el("span"), this.yearMin);
    yearText.textContent = t("filter.year");
    const filter = this.filter();
    if (document.activeElement !== this.yearMin) {
      this.yearMin.value = filter?.year_range ? String(filter.year_range[0]) : "";
    }
    if (document.activeElement !== this.yearMax) {
      this.yearMax.value = filter?.year_range ? String(filter.year_range[1]) : "";
    }
    this.yearMin.disabled = this.yearMax.disabled = !canEdit || !vm.dataset;
    this.regionLabel.textContent = `${t("filter.region")} (${REGION_COLUMN})`;
    this.renderRegions(canEdit);
    this.exportBtn.textContent = t("menu.export");
    this.exportBtn.disabled = !vm.dataset;

    // -- side panel
    this.renderDetail(t);
    this.renderWatchlist(t, canEdit);
    this.renderStats(t);
    this.renderSnapshots(t, canEdit);
  }

  private syncSelect(select: HTMLSelectElement, options: string[], value: string): void {
    const want = options.join("");
    if (select.dataset.options !== want) {
      clear(select);
      for (const opt of options) {
        const o = el("option");
        o.value = opt;
        o.textContent = opt;
        select.appendChild(o);
      }
      select.dataset.options = want;
    }
    if (value && select.value !== value) select.value = value;
  }

  private renderRegions(canEdit: boolean): void {
    const filter = this.filter();
    const regions = this.allRegions();
    const want = regions.join("");
    if (this.regionBox.dataset.regions !== want) {
      clear(this.regionBox);
      for (const region of regions) {
        const label = el("label", "check-row");
        const box = el("input");
        box.type = "checkbox";
        box.dataset.region = region;
        box.addEventListener("change", () => this.onRegionToggle(region, box.checked));
        label.append(box, el("span", undefined, region));
        this.regionBox.appendChild(label);
      }
      this.regionBox.dataset.regions = want;
    }
    const active = filter?.regions;
    for (const box of this.regionBox.querySelectorAll("input")) {
      const input = box as HTMLInputElement;
      input.checked = active == null || active.includes(input.dataset.region!);
      input.disabled = !canEdit;
    }
  }

  private renderDetail(t: (k: string) => string): void {
    this.detailTitle.textContent = t("detail.title");
    clear(this.detailBody);
    const cube = this.vm.replica ? cubeState(this.vm.replica) : null;
    const ds = this.vm.dataset;
    if (!cube || cube.selected_row === null || !ds || !ds.rows[cube.selected_row]) {
      this.detailBody.appendChild(el("div", "empty", "—"));
      return;
    }
    const table = el("table");
    for (const [key, value] of recordDetail(ds, cube.selected_row)) {
      const tr = el("tr");
      tr.append(el("td", "k", key), el("td", "v", value));
      table.appendChild(tr);
    }
    this.detailBody.appendChild(table);
  }

  private renderWatchlist(t: (k: string) => string, canEdit: boolean): void {
    this.watchTitle.textContent = t("menu.watchlist");
    this.watchAddBtn.textContent = t("watchlist.add");
    this.watchExportBtn.textContent = t("watchlist.export");
    const cube = this.vm.replica ? cubeState(this.vm.replica) : null;
    this.watchAddBtn.disabled = !canEdit || this.selectedIndividual() === null;
    this.watchExportBtn.disabled = !this.vm.dataset || !cube || cube.watchlist.length === 0;
    clear(this.watchList);
    if (!cube) return;
    for (const entry of cube.watchlist) {
      const li = el("li");
      li.appendChild(el("span", "ind", entry.individual_id));
      const rm = el("button", "small-btn", t("watchlist.remove"));
      rm.disabled = !canEdit;
      rm.addEventListener("click", () => this.vm.watchlistRemove(entry.individual_id));
      li.appendChild(rm);
      this.watchList.appendChild(li);
    }
  }

  private renderStats(t: (k: string) => string): void {
    this.statsTitle.textContent = t("wall.statistics");
    clear(this.statsBody);
    const ds = this.vm.dataset;
    const filter = this.filter();
    if (!ds || !filter) {
      this.statsBody.appendChild(el("div", "empty", "—"));
      return;
    }
    const cols = numericColumns(ds);
    const stats = subsetStatistics(ds, filter, cols);
    const table = el("table");
    const head = el("tr");
    head.append(
      el("th"),
      el("th", undefined, t("stats.count")),
      el("th", undefined, t("stats.mean")),
      el("th", undefined, t("stats.std")),
      el("th", undefined, t("stats.min")),
      el("th", undefined, t("stats.max")),
    );
    table.appendChild(head);
    for (const col of cols) {
      const s = stats.get(col)!;
      const tr = el("tr");
      const fmt = (v: number | null) => (v === null ? "—" : displayValue(v));
      tr.append(
        el("td", "k", col),
        el("td", "v", String(s.count)),
        el("td", "v", fmt(s.mean)),
        el("td", "v", fmt(s.std)),
        el("td", "v", fmt(s.min)),
        el("td", "v", fmt(s.max)),
      );
      table.appendChild(tr);
    }
    this.statsBody.appendChild(table);
  }

  private renderSnapshots(t: (k: string) => string, canEdit: boolean): void {
    this.snapTitle.textContent = t("wall.title");
    this.snapTakeBtn.textContent = t("snapshot.take");
    const cube = this.vm.replica ? cubeState(this.vm.replica) : null;
    this.snapTakeBtn.disabled = !canEdit || !cube?.mapping || !this.vm.dataset;
    clear(this.snapList);
    const wall = this.vm.replica ? wallState(this.vm.replica) : null;
    if (!wall) return;
    let shown = 0;
    wall.slots.forEach((slotId, i) => {
      if (slotId === null) return;
      const snap = this.vm.replica!.objects[slotId];
      if (!snap || snap.kind !== "snapshot") return;
      const state = snap.state as SnapshotStateW;
      shown += 1;
      const li = el("li");
      li.appendChild(el("span", "ind", `#${i + 1} ${state.face} (${state.points.length})`));
      const del = el("button", "small-btn", t("snapshot.delete"));
      del.disabled = !canEdit;
      del.addEventListener("click", () => this.vm.deleteSnapshot(slotId));
      li.appendChild(del);
      this.snapList.appendChild(li);
    });
    if (shown === 0) {
      const li = el("li", "empty", t("wall.empty"));
      this.snapList.appendChild(li);
    }
  }
}
